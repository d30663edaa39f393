import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from camel.core import (
    CamelConfig,
    DataError,
    FeatureSet,
    ProjectionModel,
    build_block_data,
    build_consistency_matrix,
    indicator_from_assignment,
    objective_sum_form,
    objective_trace_form,
)
from camel.data import SyntheticSpec, generate_synthetic, l2_normalize
from camel.matcheval import evaluate
from camel.solver import (
    camel_fit,
    camel_fit_supervised,
    cluster_purity_report,
    cmel_fit,
    fit_from_assignment,
    solve_projection,
)

from conftest import random_featureset


def small_synth(seed=0, bias=0.9, ids=40, per_view=3, M=8, V=2):
    spec = SyntheticSpec(V=V, ids=ids, per_view_per_id=per_view, M=M, latent_dim=M,
                         bias_strength=bias, noise_sigma=0.3, seed=seed)
    return l2_normalize(generate_synthetic(spec))


# ------------------------------------------------------------- eigen step


def test_eigen_step_singletons_lambda_zero():
    rng = np.random.default_rng(0)
    fs = random_featureset(rng, V=2, M=3, N=10)
    bd = build_block_data(fs)
    H = indicator_from_assignment(np.arange(10), 10)
    step = solve_projection(bd.X_tilde, H, build_consistency_matrix(2, 3), bd.sigma, 0.0, 10, 3)
    np.testing.assert_allclose(step.A, 0, atol=1e-12)
    np.testing.assert_allclose(step.eigenvalues, 0, atol=1e-12)


def test_eigen_step_two_by_two():
    fs = FeatureSet(np.array([[2.0], [3.0]]), np.array([0, 1]))
    bd = build_block_data(fs, alpha=0.0)
    H = indicator_from_assignment(np.array([0, 0]), 1)
    step = solve_projection(bd.X_tilde, H, build_consistency_matrix(2, 1), bd.sigma, 0.0, 2, 1)
    np.testing.assert_allclose(step.A, 0.25 * np.array([[4, -6], [-6, 9]]), atol=1e-15)
    # det(A - g Sigma) = 0 has roots g = 0 and g = 1 / 2; hand-solved eigenvector (1/2, 1/3)
    assert step.eigenvalues[0] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(step.U_tilde[:, 0], [0.5, 1 / 3], atol=1e-12)
    assert step.U_tilde[:, 0] @ bd.sigma @ step.U_tilde[:, 0] == pytest.approx(2.0)


def nonsymmetric_oracle(A, sigma, t):
    """Smallest eigenvalues of the nonsymmetric G = Sigma^-1 A via a general eigensolver."""
    G = np.linalg.solve(sigma, A)
    vals = sla.eig(G, right=False)
    assert np.abs(vals.imag).max() < 1e-8
    return np.sort(vals.real)[:t]


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.sampled_from([(2, 3), (2, 6), (3, 4), (4, 3), (2, 1)]),
       st.floats(0, 2), st.integers(1, 5))
def test_eigen_step_matches_oracle(seed, VM, lam, K):
    V, M = VM
    rng = np.random.default_rng(seed)
    N = 15
    fs = random_featureset(rng, V=V, M=M, N=N)
    bd = build_block_data(fs)
    D = build_consistency_matrix(V, M)
    H = indicator_from_assignment(rng.integers(0, K, N), K)
    T = int(rng.integers(1, V * M + 1))
    step = solve_projection(bd.X_tilde, H, D, bd.sigma, lam, N, T)
    U = step.U_tilde
    # symmetric, PSD A
    assert np.abs(step.A - step.A.T).max() <= 1e-10
    assert step.eigenvalues.min() >= -1e-10
    # constraint
    assert np.linalg.norm(U.T @ bd.sigma @ U - V * np.eye(T)) <= 1e-6 * np.sqrt(T)
    # objective equals V * sum of selected eigenvalues and the independent oracle
    f = objective_trace_form(U, bd.X_tilde, H, D, lam, N)
    oracle = V * nonsymmetric_oracle(step.A, bd.sigma, T).sum()
    scale = max(1.0, abs(oracle))
    assert f == pytest.approx(V * step.eigenvalues.sum(), rel=1e-6, abs=1e-9 * scale)
    assert f == pytest.approx(oracle, rel=1e-6, abs=1e-9 * scale)
    # no random feasible point does better
    L = np.linalg.cholesky(bd.sigma)
    for _ in range(20):
        Q, _ = np.linalg.qr(rng.standard_normal((V * M, T)))
        Ur = np.sqrt(V) * sla.solve_triangular(L.T, Q, lower=False)
        assert objective_trace_form(Ur, bd.X_tilde, H, D, lam, N) >= f - 1e-9 * scale


def test_eigen_step_rejects_indefinite_sigma():
    from camel.core import NumericalError
    fs = FeatureSet(np.array([[2.0], [3.0]]), np.array([0, 1]))
    bd = build_block_data(fs, alpha=0.0)
    H = indicator_from_assignment(np.array([0, 0]), 1)
    with pytest.raises(NumericalError):
        solve_projection(bd.X_tilde, H, build_consistency_matrix(2, 1), -bd.sigma, 0.0, 2, 1)


def test_eigenvector_sign_convention():
    fs = small_synth()
    model, _ = camel_fit(fs, CamelConfig(k=20))
    U = model.stacked()
    idx = np.argmax(np.abs(U), axis=0)
    assert np.all(U[idx, np.arange(U.shape[1])] > 0)


# -------------------------------------------------------------- full loop


@pytest.mark.parametrize("seed", range(4))
def test_descent_and_constraint(seed):
    fs = small_synth(seed)
    model, state = camel_fit(fs, CamelConfig(k=25, seed=seed))
    h = np.array(state.objective_history)
    assert np.all(np.diff(h) <= 1e-8)
    assert np.all(h >= 0)
    T = model.dim_out
    assert max(state.constraint_residuals) <= 1e-6 * np.sqrt(T)
    bd = build_block_data(fs)
    assert model.constraint_residual(bd.sigma) <= 1e-6 * np.linalg.norm(2 * np.eye(T))
    assert state.iteration <= 100
    assert state.converged == (state.iteration < 100 or h[-2] - h[-1] <= 1e-8)


def test_recorded_objective_matches_sum_form():
    fs = small_synth(3)
    cfg = CamelConfig(k=15, seed=1)
    model, state = camel_fit(fs, cfg)
    terms = objective_sum_form(model.stacked(), fs, state.H.assignment, cfg.lam)
    assert state.objective_history[-1] == pytest.approx(terms.total, rel=1e-10)


def test_max_iter_caps_and_flags_not_converged():
    fs = small_synth(1)
    model, state = camel_fit(fs, CamelConfig(k=25, max_iter=1, epsilon=1e-300))
    assert state.iteration == 1
    assert model.iterations == 1
    assert not state.converged and not model.converged


def copied_views():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 5)) + rng.standard_normal((20, 5)).repeat(3, axis=0)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return FeatureSet(np.vstack([X, X]), np.repeat([0, 1], 60))


def rel_gap(model):
    U1, U2 = model.transforms
    return np.linalg.norm(U1 - U2) / np.linalg.norm(U1)


@pytest.mark.xfail(strict=True, reason="padded init gives view-pure clusters; alternation stalls in "
                   "a local optimum with antisymmetric directions at lam=0.01 (see ledger)")
def test_copied_views_give_matching_transforms():
    model, _ = camel_fit(copied_views(), CamelConfig(k=20, lam=0.01))
    assert rel_gap(model) <= 0.05


def test_copied_views_symmetric_solution_has_lower_objective():
    # the symmetric optimum exists and beats the stalled local optimum
    fs = copied_views()
    _, stalled = camel_fit(fs, CamelConfig(k=20, lam=0.01))
    _, strong = camel_fit(fs, CamelConfig(k=20, lam=1.0))
    sym = fit_from_assignment(fs, strong.H.assignment, CamelConfig(k=20, lam=0.01))
    assert rel_gap(sym) <= 0.05
    f_sym = objective_sum_form(sym.stacked(), fs, strong.H.assignment, 0.01).total
    assert f_sym < stalled.objective_history[-1]


@pytest.mark.parametrize("lam", [0.1, 1.0])
def test_copied_views_match_with_stronger_coupling(lam):
    model, _ = camel_fit(copied_views(), CamelConfig(k=20, lam=lam))
    assert rel_gap(model) <= 0.05


def test_k_larger_than_n_is_an_error():
    fs = small_synth(ids=5, per_view=1)
    with pytest.raises(DataError):
        camel_fit(fs, CamelConfig(k=11))


def test_fit_deterministic():
    fs = small_synth(5)
    a, _ = camel_fit(fs, CamelConfig(k=20, seed=4))
    b, _ = camel_fit(fs, CamelConfig(k=20, seed=4))
    for Ua, Ub in zip(a.transforms, b.transforms):
        np.testing.assert_array_equal(Ua, Ub)


def test_lower_dimension_output_keeps_constraint():
    fs = small_synth(6)
    model, state = camel_fit(fs, CamelConfig(k=20, dim=3))
    assert model.dim_out == 3
    assert max(state.constraint_residuals) <= 1e-6 * np.sqrt(3)


# ------------------------------------------------------------------ variants


def test_cmel_transforms_identical():
    fs = small_synth(0, V=3)
    model = cmel_fit(fs, CamelConfig(k=20))
    for U in model.transforms[1:]:
        np.testing.assert_array_equal(U, model.transforms[0])
    # tied transforms still meet the pooled constraint
    bd = build_block_data(fs)
    assert model.constraint_residual(bd.sigma) <= 1e-6 * np.sqrt(model.dim_out)


def test_cmel_descent():
    fs = small_synth(2)
    _, state = cmel_fit(fs, CamelConfig(k=20), return_state=True)
    assert np.all(np.diff(state.objective_history) <= 1e-8)


def test_supervised_requires_labels():
    fs = small_synth()
    with pytest.raises(DataError):
        camel_fit_supervised(FeatureSet(fs.features, fs.views), CamelConfig())


def test_supervised_with_converged_clusters_reproduces_camel():
    fs = small_synth(4)
    cfg = CamelConfig(k=20, seed=2)
    model, state = camel_fit(fs, cfg)
    relabeled = FeatureSet(fs.features, fs.views, np.asarray(state.H.assignment), fs.n_views)
    sup = camel_fit_supervised(relabeled, cfg)
    # same H gives the same eigenproblem: subspaces coincide, so U1^T Sigma U2 / V is orthogonal
    bd = build_block_data(fs)
    C = model.stacked().T @ bd.sigma @ sup.stacked() / fs.n_views
    np.testing.assert_allclose(C @ C.T, np.eye(model.dim_out), atol=1e-6)
    np.testing.assert_allclose(sup.stacked(), model.stacked(), atol=1e-6)


def test_fit_from_assignment_matches_supervised():
    fs = small_synth(1)
    a = camel_fit_supervised(fs, CamelConfig())
    b = fit_from_assignment(fs, np.unique(fs.identities, return_inverse=True)[1])
    np.testing.assert_allclose(a.stacked(), b.stacked(), atol=1e-12)


def test_supervised_separable_two_identities_perfect():
    rng = np.random.default_rng(0)
    centers = np.array([[5.0, 0.0, 0.0], [0.0, 5.0, 0.0]])
    X, views, ids = [], [], []
    for p, shift in enumerate(([0.0, 0.0, 3.0], [0.0, 0.0, -3.0])):
        for i in range(2):
            for _ in range(5):
                X.append(centers[i] + shift + 0.1 * rng.standard_normal(3))
                views.append(p)
                ids.append(i)
    fs = FeatureSet(np.array(X), np.array(views), np.array(ids))
    model = camel_fit_supervised(fs, CamelConfig())
    assert evaluate(model, fs, gallery_view=1).rank1 == 1.0


def test_rankings_invariant_to_uniform_scale():
    fs = small_synth(7)
    model, _ = camel_fit(fs, CamelConfig(k=20))
    scaled = ProjectionModel(tuple(3.7 * U for U in model.transforms))
    a, b = evaluate(model, fs, seed=1), evaluate(scaled, fs, seed=1)
    for ra, rb in zip(a.ranked_ids, b.ranked_ids):
        np.testing.assert_array_equal(ra, rb)
    np.testing.assert_array_equal(a.cmc, b.cmc)


# -------------------------------------------------------------------- purity


def test_purity_hand_cases():
    assert cluster_purity_report([0, 0, 1, 1], [5, 5, 6, 6]).rate_mixed == 0.0
    rep = cluster_purity_report([0, 0, 1, 1], [5, 6, 7, 7])
    assert rep.rate_mixed == 0.5
    np.testing.assert_array_equal(rep.sizes, [2, 2])
    np.testing.assert_array_equal(rep.distinct_identities, [2, 1])


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=50))
def test_purity_bounded(pairs):
    a, i = zip(*pairs)
    assert 0.0 <= cluster_purity_report(list(a), list(i)).rate_mixed <= 1.0
