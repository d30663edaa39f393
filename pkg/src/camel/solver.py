"""Eigen step and the alternating CAMEL loop, plus the CMEL and supervised variants."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .clustering import KMeansResult, cluster_means, kmeans
from .core import (
    CamelConfig,
    DataError,
    FeatureSet,
    IndicatorMatrix,
    NumericalError,
    ProjectionModel,
    build_block_data,
    build_consistency_matrix,
    indicator_from_assignment,
    split_stacked,
)

log = logging.getLogger(__name__)


@dataclass
class SolverState:
    U_tilde: np.ndarray
    H: IndicatorMatrix
    objective_history: list = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    eigenvalues: Optional[np.ndarray] = None
    initial_assignment: Optional[np.ndarray] = None
    constraint_residuals: list = field(default_factory=list)


@dataclass(frozen=True)
class EigenStep:
    U_tilde: np.ndarray
    eigenvalues: np.ndarray
    A: np.ndarray


def _gram(X_tilde) -> np.ndarray:
    G = X_tilde @ X_tilde.T
    return G.toarray() if sp.issparse(G) else np.asarray(G)


def intra_matrix(X_tilde, H, n: int, gram=None) -> np.ndarray:
    """(1/N) X~ (I - H H^T) X~^T, symmetrised."""
    Hm = H.entries if isinstance(H, IndicatorMatrix) else H
    if gram is None:
        gram = _gram(X_tilde)
    XH = X_tilde @ Hm
    XH = XH.toarray() if sp.issparse(XH) else np.asarray(XH)
    A = (gram - XH @ XH.T) / n
    return (A + A.T) / 2


def fix_signs(U: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def solve_generalized(A: np.ndarray, B: np.ndarray, t: int, scale: float):
    """Smallest ``t`` eigenpairs of A u = g B u, with u^T B u = scale."""
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise NumericalError("constraint matrix is not positive definite") from None
    if t > A.shape[0]:
        raise ValueError(f"T={t} exceeds problem size {A.shape[0]}")
    gammas, vecs = sla.eigh(A, B, subset_by_index=[0, t - 1])
    return gammas, fix_signs(vecs * np.sqrt(scale))


def solve_projection(X_tilde, H, D, sigma, lam: float, n: int, t: int, n_views: int | None = None,
                     gram=None) -> EigenStep:
    """U~-update with H fixed.

    Solves the symmetric-definite pencil (A, Sigma~) with
    A = lam D + (1/N) X~ (I - H H^T) X~^T and keeps the ``t`` smallest
    eigenvalues, each eigenvector scaled so u^T Sigma~ u = V.
    """
    if n_views is None:
        n_views = int(round(D[0, 0])) + 1  # diagonal blocks of D are (V-1) I
    A = lam * D + intra_matrix(X_tilde, H, n, gram)
    gammas, U = solve_generalized(A, sigma, t, n_views)
    return EigenStep(U, gammas, A)


def objective_from_projection(Y: np.ndarray, H: IndicatorMatrix, U_tilde, D, lam: float) -> float:
    """F_obj from projected points Y (N x T) without materialising X~."""
    YH = np.asarray(H.entries.T @ Y)
    n = Y.shape[0]
    return float((np.sum(Y * Y) - np.sum(YH * YH)) / n + lam * np.sum(U_tilde * (D @ U_tilde)))


def _project(fs: FeatureSet, Us) -> np.ndarray:
    Y = np.empty((fs.n_samples, Us[0].shape[1]))
    for p in range(fs.n_views):
        sl = fs.view_slice(p)
        Y[sl] = fs.features[sl] @ Us[p]
    return Y


def _check_k(fs: FeatureSet, k: int):
    if k > fs.n_samples:
        raise DataError(f"K={k} exceeds the number of samples N={fs.n_samples}")


def _update_clusters(Y: np.ndarray, H: IndicatorMatrix, cfg: CamelConfig, iteration: int) -> KMeansResult:
    """H-update: the better of a warm-started and a freshly seeded k-means run.

    The warm start from the current clustering can only lower the intra term,
    which keeps F_obj non-increasing; the fresh run lets clusters escape
    configurations that split one group of matching images by view.
    """
    init = cluster_means(Y, np.asarray(H.assignment), H.n_clusters)
    warm = kmeans(Y, H.n_clusters, max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol, init=init)
    fresh = kmeans(Y, H.n_clusters, seed=[cfg.seed, iteration], max_iter=cfg.kmeans_max_iter,
                   tol=cfg.kmeans_tol)
    return fresh if fresh.inertia < warm.inertia else warm


class _Problem:
    """The pieces of one fit that stay fixed across iterations."""

    def __init__(self, fs: FeatureSet, cfg: CamelConfig, symmetric: bool):
        self.fs = fs
        self.cfg = cfg
        self.symmetric = symmetric
        self.block = build_block_data(fs, cfg.alpha)
        V, M = fs.n_views, fs.dim
        self.V, self.M, self.N = V, M, fs.n_samples
        self.T = cfg.output_dim(V, M) if not symmetric else (M if cfg.dim is None else cfg.dim)
        if symmetric:
            if self.T > M:
                raise ValueError(f"T={self.T} exceeds M={M} for the shared transform")
            self.X = fs.features.T
            self.gram = self.X @ self.X.T
            # mean of the per-view covariances: tying U^p = U turns the pooled
            # constraint sum_p U^T Sigma^p U = V I into U^T mean(Sigma^p) U = I
            self.B = sum(self.block.view_sigmas) / V
            self.D = np.zeros((M, M))
        else:
            self.X = self.block.X_tilde
            self.gram = _gram(self.X)
            self.B = self.block.sigma
            self.D = build_consistency_matrix(V, M)

    def eigen_step(self, H: IndicatorMatrix):
        lam = 0.0 if self.symmetric else self.cfg.lam
        A = lam * self.D + intra_matrix(self.X, H, self.N, self.gram)
        scale = 1.0 if self.symmetric else float(self.V)
        gammas, U = solve_generalized(A, self.B, self.T, scale)
        if self.symmetric:
            Us = [U] * self.V
        else:
            Us = split_stacked(U, self.V)
        return U, Us, gammas

    def objective(self, Y, H, U):
        lam = 0.0 if self.symmetric else self.cfg.lam
        return objective_from_projection(Y, H, U, self.D, lam)

    def constraint_residual(self, Us) -> float:
        Ut = np.vstack(Us)
        return float(np.linalg.norm(Ut.T @ self.block.sigma @ Ut - self.V * np.eye(Ut.shape[1])))


def _initial_clustering(prob: _Problem) -> KMeansResult:
    cfg = prob.cfg
    # literal k-means over the zero-padded columns of X~
    return kmeans(prob.block.X_tilde.T.tocsr(), cfg.k, seed=cfg.seed,
                  max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol)


def _alternate(prob: _Problem, variant: str):
    fs, cfg = prob.fs, prob.cfg
    _check_k(fs, cfg.k)
    init = _initial_clustering(prob)
    H = indicator_from_assignment(init.assignment, cfg.k)
    U, Us, gammas = prob.eigen_step(H)
    Y = _project(fs, Us)
    state = SolverState(U, H, eigenvalues=gammas, initial_assignment=init.assignment)
    state.objective_history.append(prob.objective(Y, H, U))
    state.constraint_residuals.append(prob.constraint_residual(Us))

    while state.iteration < cfg.max_iter:
        state.iteration += 1
        km = _update_clusters(Y, H, cfg, state.iteration)
        H = indicator_from_assignment(km.assignment, cfg.k)
        U, Us, gammas = prob.eigen_step(H)
        Y = _project(fs, Us)
        f = prob.objective(Y, H, U)
        if not np.isfinite(f):
            raise NumericalError(f"objective became non-finite at iteration {state.iteration}")
        decrement = state.objective_history[-1] - f
        state.objective_history.append(f)
        state.constraint_residuals.append(prob.constraint_residual(Us))
        state.U_tilde, state.H, state.eigenvalues = U, H, gammas
        log.debug("iter %d  F_obj=%.12g  decrement=%.3g", state.iteration, f, decrement)
        if decrement <= cfg.epsilon:
            state.converged = True
            break

    model = ProjectionModel(
        tuple(Us),
        config=cfg,
        variant=variant,
        objective_history=tuple(state.objective_history),
        iterations=state.iteration,
        converged=state.converged,
        meta={"alphas": [float(a) for a in prob.block.alphas]},
    )
    return model, state


def camel_fit(fs: FeatureSet, cfg: CamelConfig = CamelConfig()):
    """Unsupervised asymmetric fit. Returns (ProjectionModel, SolverState)."""
    return _alternate(_Problem(fs, cfg, symmetric=False), "camel")


def cmel_fit(fs: FeatureSet, cfg: CamelConfig = CamelConfig(), return_state: bool = False):
    """Symmetric ablation: one shared transform for every view."""
    model, state = _alternate(_Problem(fs, cfg, symmetric=True), "cmel")
    return (model, state) if return_state else model


def camel_fit_supervised(fs: FeatureSet, cfg: CamelConfig = CamelConfig()) -> ProjectionModel:
    """One eigen step with H built from the identity labels."""
    if not fs.labeled:
        raise DataError("supervised fitting needs identity labels on every sample")
    _, assign = np.unique(fs.identities, return_inverse=True)
    prob = _Problem(fs, cfg, symmetric=False)
    H = indicator_from_assignment(assign.astype(np.int64), int(assign.max()) + 1)
    U, Us, _ = prob.eigen_step(H)
    f = prob.objective(_project(fs, Us), H, U)
    return ProjectionModel(tuple(Us), config=cfg, variant="supervised", objective_history=(f,),
                           iterations=1, converged=True,
                           meta={"alphas": [float(a) for a in prob.block.alphas]})


def fit_from_assignment(fs: FeatureSet, assign, cfg: CamelConfig = CamelConfig()) -> ProjectionModel:
    """Single eigen step for a fixed clustering (the supervised path with arbitrary H)."""
    assign = np.asarray(assign, dtype=np.int64)
    k = int(assign.max()) + 1
    prob = _Problem(fs, cfg, symmetric=False)
    U, Us, _ = prob.eigen_step(indicator_from_assignment(assign, k))
    return ProjectionModel(tuple(Us), config=cfg, variant="supervised", iterations=1, converged=True)


@dataclass(frozen=True)
class PurityReport:
    rate_mixed: float
    cluster_ids: np.ndarray
    sizes: np.ndarray
    distinct_identities: np.ndarray


def cluster_purity_report(assignment, identities) -> PurityReport:
    """Fraction of nonempty clusters holding more than one distinct identity."""
    assignment = np.asarray(assignment)
    identities = np.asarray(identities)
    if assignment.shape != identities.shape:
        raise ValueError("assignment and identities must align")
    clusters = np.unique(assignment)
    pairs = np.unique(np.stack([assignment, identities]), axis=1)
    distinct = np.bincount(np.searchsorted(clusters, pairs[0]), minlength=len(clusters))
    sizes = np.bincount(np.searchsorted(clusters, assignment), minlength=len(clusters))
    rate = float(np.mean(distinct > 1)) if len(clusters) else 0.0
    return PurityReport(rate, clusters, sizes, distinct)
