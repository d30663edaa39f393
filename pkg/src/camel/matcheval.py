"""Asymmetric cross-view matching, CMC curves and mean average precision."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import DataError, FeatureSet, ProjectionModel, preprocess_rows


def asymmetric_distance(model: ProjectionModel, x, p: int, y, q: int) -> float:
    """||U^p^T x - U^q^T y||_2 with 0-based view indices."""
    V = model.n_views
    if not (0 <= p < V and 0 <= q < V):
        raise ValueError(f"view ids must lie in [0, {V - 1}], got {p} and {q}")
    x = preprocess_rows(np.asarray(x, dtype=float), model.preprocess)
    y = preprocess_rows(np.asarray(y, dtype=float), model.preprocess)
    return float(np.linalg.norm(x @ model.transforms[p] - y @ model.transforms[q]))


def pairwise_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of A and rows of B."""
    d = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2 * A @ B.T
    return np.sqrt(np.maximum(d, 0.0))


@dataclass(frozen=True)
class GalleryProbeSplit:
    """Indices into a FeatureSet. ``shots`` gallery images per kept identity."""

    gallery: np.ndarray
    probes: np.ndarray
    shots: int
    excluded_identities: tuple = ()


def build_split(fs: FeatureSet, protocol: str = "single", shots: int | None = None, seed: int = 0,
                gallery_view: int | None = None) -> GalleryProbeSplit:
    """Draw ``shots`` gallery images per identity at random; everything else is a probe.

    With ``gallery_view`` set, gallery images come from that view only and
    probes from the other views. Identities with too few candidate images
    are left out entirely and listed in ``excluded_identities``.
    """
    if not fs.labeled:
        raise DataError("building a gallery/probe split needs identity labels")
    if protocol not in ("single", "multi"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if shots is None:
        shots = 1 if protocol == "single" else 3
    if protocol == "single" and shots != 1:
        raise ValueError("the single-shot protocol uses exactly one gallery image per identity")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    gallery, probes, excluded = [], [], []
    for ident in np.unique(fs.identities):
        rows = np.flatnonzero(fs.identities == ident)
        pool = rows if gallery_view is None else rows[fs.views[rows] == gallery_view]
        if len(pool) < shots:
            excluded.append(int(ident))
            continue
        chosen = np.sort(rng.choice(pool, size=shots, replace=False))
        gallery.extend(chosen.tolist())
        rest = np.setdiff1d(rows, chosen)
        if gallery_view is not None:
            rest = rest[fs.views[rest] != gallery_view]
        probes.extend(rest.tolist())
    return GalleryProbeSplit(np.array(gallery, dtype=np.int64), np.array(sorted(probes), dtype=np.int64),
                             shots, tuple(excluded))


@dataclass(frozen=True)
class RankingResult:
    ranked_ids: list
    cmc: np.ndarray
    map: float
    average_precision: np.ndarray
    probe_rows: np.ndarray
    excluded_probes: tuple = field(default=())

    @property
    def rank1(self) -> float:
        return float(self.cmc[0]) if len(self.cmc) else float("nan")


def average_precision(relevant_ranks) -> float:
    """AP from the 1-based ranks of every relevant item in the ranked list."""
    ranks = np.sort(np.asarray(relevant_ranks, dtype=np.int64))
    if ranks.size == 0:
        raise ValueError("no relevant items")
    # exact rational sum, rounded once
    total = sum(Fraction(i, int(r)) for i, r in enumerate(ranks, start=1))
    return float(total / ranks.size)


def mean_average_precision(rankings, truths):
    """mAP over probes. ``rankings[i]`` is probe i's ranked list of gallery labels.

    Returns (mAP, per-probe APs, indices of probes without any relevant item).
    """
    aps, skipped = [], []
    for i, (ranked, truth) in enumerate(zip(rankings, truths)):
        hits = np.flatnonzero(np.asarray(ranked) == truth) + 1
        if hits.size == 0:
            skipped.append(i)
            continue
        aps.append(average_precision(hits))
    aps = np.array(aps)
    return (float(aps.mean()) if aps.size else float("nan")), aps, tuple(skipped)


def rank_from_distances(dist, probe_ids, probe_views, gallery_ids, gallery_views) -> RankingResult:
    """Rank a probe x gallery distance matrix.

    Same-identity same-view gallery images are dropped per probe. Identities
    are ranked by their closest remaining image (ties to the lower id); mAP
    counts every relevant gallery image, ties resolved by gallery order.
    """
    dist = np.asarray(dist, dtype=float)
    probe_ids = np.asarray(probe_ids)
    gallery_ids = np.asarray(gallery_ids)
    probe_views = np.asarray(probe_views)
    gallery_views = np.asarray(gallery_views)
    uniq = np.unique(gallery_ids)
    ranked_ids, hit_rank, aps, kept, excluded = [], [], [], [], []
    for i in range(dist.shape[0]):
        valid = ~((gallery_ids == probe_ids[i]) & (gallery_views == probe_views[i]))
        d, g_ids = dist[i, valid], gallery_ids[valid]
        if not np.any(g_ids == probe_ids[i]):
            excluded.append(i)
            continue
        # identity score: minimum distance over its images
        best = np.full(len(uniq), np.inf)
        np.minimum.at(best, np.searchsorted(uniq, g_ids), d)
        present = np.isfinite(best)
        ids_here, scores = uniq[present], best[present]
        order = np.lexsort((ids_here, scores))
        ranked = ids_here[order]
        ranked_ids.append(ranked)
        hit_rank.append(int(np.flatnonzero(ranked == probe_ids[i])[0]))
        img_order = np.argsort(d, kind="stable")
        aps.append(average_precision(np.flatnonzero(g_ids[img_order] == probe_ids[i]) + 1))
        kept.append(i)
    n_ids = len(uniq)
    hit_rank = np.array(hit_rank, dtype=np.int64)
    if hit_rank.size:
        cmc = np.cumsum(np.bincount(hit_rank, minlength=n_ids)[:n_ids]) / hit_rank.size
    else:
        cmc = np.zeros(n_ids)
    aps = np.array(aps)
    return RankingResult(ranked_ids, cmc, float(aps.mean()) if aps.size else float("nan"), aps,
                         np.array(kept, dtype=np.int64), tuple(excluded))


def rank_gallery(model: ProjectionModel, split: GalleryProbeSplit, fs: FeatureSet) -> RankingResult:
    if (model.n_views, model.dim_in) != (fs.n_views, fs.dim):
        raise DataError(
            f"model expects V={model.n_views}, M={model.dim_in}; features have V={fs.n_views}, M={fs.dim}"
        )
    Y = model.project(fs.features, fs.views)
    g, q = split.gallery, split.probes
    dist = pairwise_distances(Y[q], Y[g])
    res = rank_from_distances(dist, fs.identities[q], fs.views[q], fs.identities[g], fs.views[g])
    return res


def evaluate(model: ProjectionModel, fs: FeatureSet, protocol="single", shots=None, seed=0,
             gallery_view=None) -> RankingResult:
    split = build_split(fs, protocol, shots, seed, gallery_view)
    return rank_gallery(model, split, fs)
