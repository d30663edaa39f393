"""Feature CSV ingestion, model files, PCA and the synthetic cross-view generator."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .core import CamelConfig, DataError, FeatureSet, ProjectionModel, preprocess_rows

MODEL_FORMAT = "camel-model"
MODEL_VERSION = 1


# --------------------------------------------------------------------------- CSV


def load_features(path, n_views: Optional[int] = None) -> FeatureSet:
    """Read ``view,id,f1..fM`` rows. View ids on disk are 1-based."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "view" or header[1] != "id":
            raise DataError(f"{path}:1: header must be 'view,id,f1,...,fM'")
        m = len(header) - 2
        views, ids, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != m + 2:
                raise DataError(f"{path}:{lineno}: expected {m + 2} fields, got {len(row)}")
            try:
                v = int(row[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: view id {row[0]!r} is not an integer") from None
            if v < 1 or (n_views is not None and v > n_views):
                raise DataError(f"{path}:{lineno}: unknown view id {v}")
            ident = row[1].strip()
            if ident:
                try:
                    ids.append(int(ident))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: identity {ident!r} is not an integer") from None
            else:
                ids.append(None)
            try:
                rows.append([float(x) for x in row[2:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric feature ({exc})") from None
            views.append(v - 1)
    if not rows:
        raise DataError(f"{path}: no samples")
    have = [i is not None for i in ids]
    if any(have) and not all(have):
        first = have.index(False) if have[0] else have.index(True)
        raise DataError(f"{path}:{first + 2}: identity column must be filled on every row or none")
    identities = np.array(ids, dtype=np.int64) if all(have) else None
    return FeatureSet(np.array(rows), np.array(views, dtype=np.int64), identities, n_views)


def save_features(fs: FeatureSet, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(features_to_csv_text(fs))


# -------------------------------------------------------------------- model file


class ModelFileError(DataError):
    pass


def _fmt(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ModelFileError("model contains non-finite values")
    return "%.17g" % x


def _matrix_text(U: np.ndarray, indent: str) -> str:
    rows = ",\n".join(indent + "  [" + ", ".join(_fmt(v) for v in r) + "]" for r in U)
    return "[\n" + rows + "\n" + indent + "]"


def model_to_text(model: ProjectionModel) -> str:
    cfg = None if model.config is None else asdict(model.config)
    head = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "variant": model.variant,
        "preprocess": model.preprocess,
        "V": model.n_views,
        "M": model.dim_in,
        "T": model.dim_out,
        "iterations": model.iterations,
        "converged": model.converged,
        "config": cfg,
        "meta": model.meta,
    }
    parts = [f"  {json.dumps(k)}: {json.dumps(v, sort_keys=True)}" for k, v in head.items()]
    parts.append('  "objective_history": [' + ", ".join(_fmt(f) for f in model.objective_history) + "]")
    mats = ",\n".join("    " + _matrix_text(U, "    ") for U in model.transforms)
    parts.append('  "transforms": [\n' + mats + "\n  ]")
    return "{\n" + ",\n".join(parts) + "\n}\n"


def model_from_text(text: str) -> ProjectionModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFileError("not a CAMEL model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFileError(f"unsupported model version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        V, M, T = int(doc["V"]), int(doc["M"]), int(doc["T"])
        Us = tuple(np.array(U, dtype=float) for U in doc["transforms"])
        cfg_doc = doc.get("config")
        known = {f.name for f in fields(CamelConfig)}
        cfg = None if cfg_doc is None else CamelConfig(**{k: v for k, v in cfg_doc.items() if k in known})
        model = ProjectionModel(
            Us,
            config=cfg,
            variant=doc["variant"],
            objective_history=tuple(doc["objective_history"]),
            iterations=int(doc["iterations"]),
            converged=bool(doc["converged"]),
            meta=doc.get("meta") or {},
            preprocess=doc.get("preprocess", "none"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None
    if (model.n_views, model.dim_in, model.dim_out) != (V, M, T):
        raise ModelFileError("model header disagrees with the stored matrices")
    return model


def save_model(model: ProjectionModel, path) -> None:
    text = model_to_text(model)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_model(path) -> ProjectionModel:
    with open(path) as fh:
        return model_from_text(fh.read())


# --------------------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PCA:
    mean: np.ndarray
    components: np.ndarray  # M x out_dim, orthonormal columns
    variances: np.ndarray

    def transform(self, fs: FeatureSet) -> FeatureSet:
        Z = (fs.features - self.mean) @ self.components
        return FeatureSet(Z, fs.views, fs.identities, fs.n_views)


def fit_pca(fs: FeatureSet, out_dim: int) -> PCA:
    if not 1 <= out_dim <= fs.dim:
        raise ValueError(f"out_dim must lie in [1, {fs.dim}], got {out_dim}")
    mean = fs.features.mean(axis=0)
    Xc = fs.features - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    W = Vt[:out_dim].T
    idx = np.argmax(np.abs(W), axis=0)
    W = W * np.sign(W[idx, np.arange(out_dim)])
    var = np.zeros(out_dim)
    k = min(out_dim, len(s))
    var[:k] = s[:k] ** 2 / fs.n_samples
    if W.shape[1] < out_dim:  # fewer samples than dimensions
        raise ValueError("not enough samples for the requested number of components")
    return PCA(mean, W, var)


def l2_normalize(fs: FeatureSet) -> FeatureSet:
    """Scale every feature vector to unit Euclidean norm (zero vectors stay zero)."""
    return FeatureSet(preprocess_rows(fs.features, "l2"), fs.views, fs.identities, fs.n_views)


def pca_reduce(fs: FeatureSet, out_dim: int) -> FeatureSet:
    """Project pooled features onto their top ``out_dim`` principal components."""
    return fit_pca(fs, out_dim).transform(fs)


# --------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    """Shared latent identities observed through per-view affine distortions.

    View p sees ``x = A^p (E z) + b^p + noise`` with ``A^p = I + bias_strength R^p``,
    R^p uniform in [-1, 1] with unit-norm columns, E a fixed orthonormal
    embedding of the latent space and ``b^p`` a view offset of the same scale.
    """

    V: int = 2
    ids: int = 600
    per_view_per_id: int = 4
    M: int = 64
    latent_dim: int = 64
    bias_strength: float = 0.9
    noise_sigma: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("V", "ids", "per_view_per_id", "M", "latent_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.latent_dim > self.M:
            raise ValueError("latent_dim cannot exceed M")
        if self.bias_strength < 0 or self.noise_sigma < 0:
            raise ValueError("bias_strength and noise_sigma must be >= 0")


@dataclass(frozen=True)
class SyntheticTruth:
    embedding: np.ndarray
    distortions: tuple
    offsets: tuple
    latents: np.ndarray


def view_distortions(spec: SyntheticSpec):
    """The fixed per-view (A^p, b^p) pairs and the latent embedding for ``spec.seed``."""
    rng = np.random.default_rng([spec.seed, 0])
    E, _ = np.linalg.qr(rng.standard_normal((spec.M, spec.latent_dim)))
    As, bs = [], []
    for _ in range(spec.V):
        R = rng.uniform(-1.0, 1.0, size=(spec.M, spec.M))
        R /= np.linalg.norm(R, axis=0, keepdims=True)
        As.append(np.eye(spec.M) + spec.bias_strength * R)
        b = rng.standard_normal(spec.M) * np.sqrt(spec.latent_dim / spec.M)
        bs.append(spec.bias_strength * b)
    return E, tuple(As), tuple(bs)


def generate_synthetic(spec: SyntheticSpec, return_truth: bool = False):
    E, As, bs = view_distortions(spec)
    rng = np.random.default_rng([spec.seed, 1])
    Z = rng.standard_normal((spec.ids, spec.latent_dim)) @ E.T  # ids x M
    n_per = spec.ids * spec.per_view_per_id
    feats, views, ids = [], [], []
    identity = np.repeat(np.arange(spec.ids), spec.per_view_per_id)
    for p in range(spec.V):
        clean = Z[identity] @ As[p].T + bs[p]
        feats.append(clean + spec.noise_sigma * rng.standard_normal((n_per, spec.M)))
        views.append(np.full(n_per, p))
        ids.append(identity)
    fs = FeatureSet(np.vstack(feats), np.concatenate(views), np.concatenate(ids), spec.V)
    if return_truth:
        return fs, SyntheticTruth(E, As, bs, Z)
    return fs


def split_identities(fs: FeatureSet, n_train: int):
    """Identities with id < ``n_train`` go to the first set, the rest to the second."""
    if not fs.labeled:
        raise DataError("splitting by identity needs labels")
    train = fs.identities < n_train
    if train.all() or not train.any():
        raise DataError("identity split leaves one side empty")
    return fs.subset(train), fs.subset(~train)


def features_to_csv_text(fs: FeatureSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["view", "id"] + [f"f{j + 1}" for j in range(fs.dim)])
    for i in range(fs.n_samples):
        ident = "" if fs.identities is None else str(int(fs.identities[i]))
        w.writerow([str(int(fs.views[i]) + 1), ident] + [repr(float(x)) for x in fs.features[i]])
    return buf.getvalue()
