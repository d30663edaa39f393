"""Synthetic benchmark shared by the acceptance suite and the experiment scripts."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import CamelConfig, ProjectionModel
from .data import SyntheticSpec, generate_synthetic, l2_normalize, split_identities
from .matcheval import evaluate
from .solver import camel_fit, camel_fit_supervised, cluster_purity_report, cmel_fit


@dataclass(frozen=True)
class BenchmarkSetting:
    """Train on the first ``n_train`` identities, test on the rest.

    Gallery images come from the last view, probes from the others, and
    rank-1 is averaged over ``repetitions`` random gallery draws.
    """

    spec: SyntheticSpec = SyntheticSpec()
    n_train: int = 300
    k: int = 300
    lam: float = 0.01
    repetitions: int = 10

    def with_seed(self, seed: int) -> "BenchmarkSetting":
        return replace(self, spec=replace(self.spec, seed=seed))

    def with_bias(self, bias: float) -> "BenchmarkSetting":
        return replace(self, spec=replace(self.spec, bias_strength=bias))


def load_split(setting: BenchmarkSetting):
    fs = l2_normalize(generate_synthetic(setting.spec))
    return split_identities(fs, setting.n_train)


def mean_rank1(model: ProjectionModel, test, repetitions: int = 10) -> float:
    gv = test.n_views - 1
    return float(np.mean([evaluate(model, test, seed=r, gallery_view=gv).rank1
                          for r in range(repetitions)]))


def run_methods(setting: BenchmarkSetting, methods=("camel", "cmel", "supervised", "euclidean"),
                k: int | None = None) -> dict:
    """Rank-1 per method plus CAMEL's mixed-cluster rates (initial, converged)."""
    train, test = load_split(setting)
    cfg = CamelConfig(lam=setting.lam, k=k or setting.k, seed=setting.spec.seed)
    out = {}
    for name in methods:
        if name == "camel":
            model, state = camel_fit(train, cfg)
            out["purity"] = (cluster_purity_report(state.initial_assignment, train.identities).rate_mixed,
                             cluster_purity_report(state.H.assignment, train.identities).rate_mixed)
        elif name == "cmel":
            model = cmel_fit(train, cfg)
        elif name == "supervised":
            model = camel_fit_supervised(train, cfg)
        elif name == "euclidean":
            model = ProjectionModel.identity(train.n_views, train.dim)
        else:
            raise ValueError(f"unknown method {name!r}")
        out[name] = mean_rank1(model, test, setting.repetitions)
    return out
