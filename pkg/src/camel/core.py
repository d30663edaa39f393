"""Domain types, block-matrix constructions and the CAMEL objective.

Views and clusters are indexed from 0 inside the library. The CSV layer in
:mod:`camel.data` converts to and from the 1-based view ids used on disk.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp


class CamelError(Exception):
    """Base class for errors raised by the package."""


class DataError(CamelError):
    pass


class NumericalError(CamelError):
    pass


@dataclass(frozen=True)
class FeatureSet:
    """Samples from ``n_views`` camera views, stored grouped by view.

    ``features`` is N x M (one row per sample), ``views`` holds the 0-based
    view of each row and ``identities`` is either None or an int array.
    Rows are reordered on construction so views appear in ascending order;
    input order is kept inside a view.
    """

    features: np.ndarray
    views: np.ndarray
    identities: Optional[np.ndarray] = None
    n_views: Optional[int] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError(f"features must be a 2-D array with M >= 1, got shape {X.shape}")
        views = np.asarray(self.views)
        if views.shape != (X.shape[0],):
            raise DataError("views must hold one entry per sample")
        if not np.issubdtype(views.dtype, np.integer):
            raise DataError("view ids must be integers")
        V = int(views.max()) + 1 if self.n_views is None else int(self.n_views)
        if V < 2:
            raise DataError(f"need at least 2 views, got {V}")
        if views.min() < 0 or views.max() >= V:
            raise DataError(f"view ids must lie in [0, {V - 1}]")
        counts = np.bincount(views, minlength=V)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise DataError(f"views without samples: {missing}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")

        order = np.argsort(views, kind="stable")
        ids = self.identities
        if ids is not None:
            ids = np.asarray(ids)
            if ids.shape != views.shape:
                raise DataError("identities must hold one entry per sample")
            if not np.issubdtype(ids.dtype, np.integer):
                raise DataError("identity ids must be integers")
            ids = ids[order]
            ids.setflags(write=False)

        X = np.ascontiguousarray(X[order])
        views = views[order].astype(np.int64)
        X.setflags(write=False)
        views.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "identities", ids)
        object.__setattr__(self, "n_views", V)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def view_counts(self) -> np.ndarray:
        return np.bincount(self.views, minlength=self.n_views)

    @property
    def labeled(self) -> bool:
        return self.identities is not None

    def view_slice(self, p: int) -> slice:
        start = int(np.searchsorted(self.views, p, side="left"))
        stop = int(np.searchsorted(self.views, p, side="right"))
        return slice(start, stop)

    def view_features(self, p: int) -> np.ndarray:
        return self.features[self.view_slice(p)]

    def subset(self, mask) -> "FeatureSet":
        mask = np.asarray(mask)
        ids = None if self.identities is None else self.identities[mask]
        return FeatureSet(self.features[mask], self.views[mask], ids, self.n_views)


@dataclass(frozen=True)
class CamelConfig:
    """Hyperparameters for the alternating solver.

    ``dim=None`` means T = M. ``alpha=None`` selects the per-view ridge
    ``0.01 * trace(X^p X^p^T / N_p) / M``.
    """

    lam: float = 0.01
    k: int = 500
    dim: Optional[int] = None
    alpha: Optional[float] = None
    epsilon: float = 1e-8
    max_iter: int = 100
    seed: int = 0
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-10

    def __post_init__(self):
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError(f"lambda must be a finite nonnegative number, got {self.lam}")
        if self.k < 2:
            raise ValueError(f"K must be >= 2, got {self.k}")
        if self.dim is not None and self.dim < 1:
            raise ValueError(f"T must be >= 1, got {self.dim}")
        if self.alpha is not None and not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def output_dim(self, n_views: int, m: int) -> int:
        T = m if self.dim is None else self.dim
        if T > n_views * m:
            raise ValueError(f"T={T} exceeds V*M={n_views * m}")
        return T


@dataclass(frozen=True)
class IndicatorMatrix:
    """Scaled cluster indicator H (N x K, sparse), one nonzero per row."""

    entries: sp.csr_matrix
    assignment: np.ndarray
    cluster_sizes: np.ndarray

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_clusters(self) -> int:
        return self.entries.shape[1]

    @property
    def empty_clusters(self) -> np.ndarray:
        return np.flatnonzero(self.cluster_sizes == 0)

    def toarray(self) -> np.ndarray:
        return self.entries.toarray()


PREPROCESSING = ("none", "l2")


def preprocess_rows(X: np.ndarray, mode: str) -> np.ndarray:
    if mode == "none":
        return X
    if mode == "l2":
        norms = np.linalg.norm(X, axis=-1, keepdims=True)
        return X / np.where(norms > 0, norms, 1.0)
    raise ValueError(f"unknown preprocessing {mode!r}")


@dataclass(frozen=True)
class ProjectionModel:
    """Per-view M x T transforms plus the metadata of the fit that produced them."""

    transforms: tuple
    config: Optional[CamelConfig] = None
    variant: str = "camel"
    objective_history: tuple = ()
    iterations: int = 0
    converged: bool = False
    meta: dict = field(default_factory=dict)
    preprocess: str = "none"

    def __post_init__(self):
        if self.preprocess not in PREPROCESSING:
            raise ValueError(f"unknown preprocessing {self.preprocess!r}")
        Us = tuple(np.array(U, dtype=float) for U in self.transforms)
        if len(Us) < 2:
            raise ValueError("a projection model needs at least 2 views")
        shape = Us[0].shape
        if any(U.ndim != 2 or U.shape != shape for U in Us):
            raise ValueError("all transforms must share one M x T shape")
        for U in Us:
            U.setflags(write=False)
        object.__setattr__(self, "transforms", Us)
        object.__setattr__(self, "objective_history", tuple(float(f) for f in self.objective_history))

    @property
    def n_views(self) -> int:
        return len(self.transforms)

    @property
    def dim_in(self) -> int:
        return self.transforms[0].shape[0]

    @property
    def dim_out(self) -> int:
        return self.transforms[0].shape[1]

    @property
    def final_objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else float("nan")

    def stacked(self) -> np.ndarray:
        """Return the (V*M) x T matrix [U^1; ...; U^V]."""
        return np.vstack(self.transforms)

    def project(self, X: np.ndarray, views: np.ndarray) -> np.ndarray:
        """Map each row of ``X`` through the transform of its view; returns N x T."""
        X = preprocess_rows(np.asarray(X, dtype=float), self.preprocess)
        views = np.asarray(views)
        if views.size and (views.min() < 0 or views.max() >= self.n_views):
            raise ValueError(f"view ids must lie in [0, {self.n_views - 1}]")
        Y = np.empty((X.shape[0], self.dim_out))
        for p, U in enumerate(self.transforms):
            rows = views == p
            Y[rows] = X[rows] @ U
        return Y

    def constraint_residual(self, sigma: np.ndarray) -> float:
        """Frobenius norm of U~^T Sigma~ U~ - V*I."""
        Ut = self.stacked()
        return float(np.linalg.norm(Ut.T @ sigma @ Ut - self.n_views * np.eye(self.dim_out)))

    @classmethod
    def identity(cls, n_views: int, m: int, preprocess: str = "none") -> "ProjectionModel":
        return cls(tuple(np.eye(m) for _ in range(n_views)), variant="euclidean", preprocess=preprocess)


@dataclass(frozen=True)
class BlockData:
    """Block-padded data X~ (VM x N, sparse) and the block-diagonal covariance."""

    X_tilde: sp.csc_matrix
    sigma: np.ndarray
    view_sigmas: tuple
    alphas: tuple
    n_views: int
    dim: int

    @property
    def n_samples(self) -> int:
        return self.X_tilde.shape[1]


def default_alpha(Xp: np.ndarray) -> float:
    # 1% of the mean per-feature second moment
    return 0.01 * float(np.einsum("ij,ij->", Xp, Xp)) / (Xp.shape[0] * Xp.shape[1])


def padded_columns(fs: FeatureSet) -> sp.csc_matrix:
    """X~ as a sparse VM x N matrix: sample j occupies the rows of its view's block."""
    N, M = fs.features.shape
    rows = (fs.views[:, None] * M + np.arange(M)[None, :]).ravel()
    cols = np.repeat(np.arange(N), M)
    return sp.csc_matrix((fs.features.ravel(), (rows, cols)), shape=(fs.n_views * M, N))


def build_block_data(fs: FeatureSet, alpha: Optional[float] = None) -> BlockData:
    V, M = fs.n_views, fs.dim
    sigmas, alphas = [], []
    for p in range(V):
        Xp = fs.view_features(p)
        a = default_alpha(Xp) if alpha is None else float(alpha)
        if a < 0:
            raise ValueError("alpha must be >= 0")
        S = Xp.T @ Xp / Xp.shape[0] + a * np.eye(M)
        sigmas.append(S)
        alphas.append(a)
    sigma = np.zeros((V * M, V * M))
    for p, S in enumerate(sigmas):
        sigma[p * M:(p + 1) * M, p * M:(p + 1) * M] = S
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "block covariance is singular; use alpha > 0 or more samples per view"
        ) from None
    return BlockData(padded_columns(fs), sigma, tuple(sigmas), tuple(alphas), V, M)


def build_consistency_matrix(n_views: int, dim: int) -> np.ndarray:
    """D with (V-1)I on the diagonal blocks and -I off the diagonal."""
    if n_views < 2:
        raise ValueError("need at least 2 views")
    return np.kron(n_views * np.eye(n_views) - np.ones((n_views, n_views)), np.eye(dim))


def indicator_from_assignment(assign, k: int) -> IndicatorMatrix:
    """Build H from 0-based cluster ids. Clusters with no members give zero columns."""
    assign = np.asarray(assign)
    if assign.ndim != 1 or not np.issubdtype(assign.dtype, np.integer):
        raise ValueError("assignment must be a 1-D integer array")
    if assign.size and (assign.min() < 0 or assign.max() >= k):
        raise ValueError(f"cluster ids must lie in [0, {k - 1}]")
    sizes = np.bincount(assign, minlength=k)
    vals = 1.0 / np.sqrt(sizes[assign])
    N = assign.size
    H = sp.csr_matrix((vals, (np.arange(N), assign)), shape=(N, k))
    assign = assign.copy()
    assign.setflags(write=False)
    return IndicatorMatrix(H, assign, sizes)


def consistency_term(Us) -> float:
    """Sum over unordered view pairs of ||U^p - U^q||_F^2."""
    total = 0.0
    for p in range(len(Us)):
        for q in range(p + 1, len(Us)):
            total += float(np.sum((Us[p] - Us[q]) ** 2))
    return total


def split_stacked(U_tilde: np.ndarray, n_views: int) -> list:
    M = U_tilde.shape[0] // n_views
    return [U_tilde[p * M:(p + 1) * M] for p in range(n_views)]


@dataclass(frozen=True)
class ObjectiveTerms:
    total: float
    intra: float
    consistency: float
    empty_clusters: tuple = ()


def objective_sum_form(U_tilde, fs: FeatureSet, assign, lam: float) -> ObjectiveTerms:
    """Evaluate the objective cluster by cluster from projected points and their means.

    ``intra`` is the raw within-cluster sum of squares; ``total`` divides it by N.
    """
    Us = split_stacked(np.asarray(U_tilde, dtype=float), fs.n_views)
    assign = np.asarray(assign)
    Y = np.empty((fs.n_samples, Us[0].shape[1]))
    for p in range(fs.n_views):
        sl = fs.view_slice(p)
        Y[sl] = fs.features[sl] @ Us[p]
    k = int(assign.max()) + 1 if assign.size else 0
    intra = 0.0
    for c in range(k):
        members = Y[assign == c]
        if len(members) == 0:
            continue
        intra += float(np.sum((members - members.mean(axis=0)) ** 2))
    empty = tuple(int(c) for c in np.flatnonzero(np.bincount(assign, minlength=k) == 0))
    cons = consistency_term(Us)
    return ObjectiveTerms(intra / fs.n_samples + lam * cons, intra, cons, empty)


def objective_trace_form(U_tilde, X_tilde, H, D, lam: float, n: int) -> float:
    """(1/N)Tr(X~^T U~ U~^T X~) + lam Tr(U~^T D U~) - (1/N)Tr(H^T X~^T U~ U~^T X~ H)."""
    U_tilde = np.asarray(U_tilde, dtype=float)
    Hm = H.entries if isinstance(H, IndicatorMatrix) else H
    if X_tilde.shape[0] != U_tilde.shape[0] or D.shape != (U_tilde.shape[0],) * 2:
        raise ValueError("dimension mismatch between U~, X~ and D")
    if Hm.shape[0] != X_tilde.shape[1]:
        raise ValueError("H must have one row per column of X~")
    Yt = np.asarray(X_tilde.T @ U_tilde)  # N x T
    YH = np.asarray(Hm.T @ Yt)  # K x T
    return float(
        (np.sum(Yt * Yt) - np.sum(YH * YH)) / n
        + lam * np.trace(U_tilde.T @ D @ U_tilde)
    )
