import numpy as np
import pytest

from fladopt.diagnostics import (
    dense_hessian,
    hutchinson_trace,
    landscape_slice,
    random_direction,
    spectrum_report,
    top_eigenpairs,
    tr_h_sigma,
)
from fladopt.mlp import MlpOracle, ModelSpec, init_params
from fladopt.oracles import Batch, LossOracle, QuadraticOracle
from fladopt.params import ParamLayout, ParamVector


def mlp_case(seed=2, dim=4, hidden=(10,), classes=3, n=16):
    spec = ModelSpec(dim, hidden, classes, "tanh", init_seed=seed)
    oracle = MlpOracle(spec)
    w = init_params(spec).values
    rng = np.random.default_rng(seed)
    batch = Batch(rng.normal(size=(n, dim)), rng.integers(0, classes, size=n))
    return spec, oracle, w, batch


# -- eigenpairs ------------------------------------------------------------------


def test_known_diagonal_spectrum():
    q = QuadraticOracle(np.diag([5.0, 2.0, 1.0]))
    report = top_eigenpairs(q, np.zeros(3), None, k=2)
    assert abs(report.eigenvalues[0] - 5.0) < 1e-6
    assert abs(report.eigenvalues[1] - 2.0) < 1e-6
    assert abs(abs(report.eigenvectors[0][0]) - 1.0) < 1e-5
    assert abs(abs(report.eigenvectors[1][1]) - 1.0) < 1e-5


def test_identity_matrix_any_start_vector():
    q = QuadraticOracle(np.eye(4))
    for seed in range(3):
        report = top_eigenpairs(q, np.zeros(4), None, k=1, seed=seed)
        assert abs(report.eigenvalues[0] - 1.0) < 1e-9


def test_mlp_top_eigenvalue_matches_dense_oracle():
    _, oracle, w, batch = mlp_case()
    assert oracle.dim <= 200
    h = dense_hessian(oracle, w, batch)
    dense_top = np.linalg.eigvalsh((h + h.T) / 2)[-1]
    report = top_eigenpairs(oracle, w, batch, k=1, iters=300)
    assert abs(report.eigenvalues[0] - dense_top) / abs(dense_top) < 1e-4


def test_eigenvector_orthogonality_unit_norm_and_residual_bound():
    _, oracle, w, batch = mlp_case(hidden=(8,))
    tol = 1e-6
    report = top_eigenpairs(oracle, w, batch, k=4, iters=400, tol=tol)
    vecs = report.eigenvectors
    gram = vecs @ vecs.T
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() < 1e-6
    assert np.abs(np.linalg.norm(vecs, axis=1) - 1.0).max() < 1e-8
    for lam, res, ok in zip(report.eigenvalues, report.residuals, report.converged):
        if ok:
            assert res < tol * (abs(lam) + 1)


def test_eigenvalues_sorted_descending():
    q = QuadraticOracle(np.diag([1.0, 4.0, 2.0, 3.0]))
    report = top_eigenpairs(q, np.zeros(4), None, k=4)
    assert report.eigenvalues == sorted(report.eigenvalues, reverse=True)


def test_k_zero_rejected():
    q = QuadraticOracle(np.eye(2))
    with pytest.raises(ValueError, match="at least 1"):
        top_eigenpairs(q, np.zeros(2), None, k=0)


def test_non_finite_hvp_raises():
    class BadOracle(QuadraticOracle):
        def hvp(self, w, batch=None, v=None):
            return np.full_like(v, np.nan)

    with pytest.raises(FloatingPointError, match="non-finite"):
        top_eigenpairs(BadOracle(np.eye(2)), np.zeros(2), None, k=1)


# -- hutchinson trace ---------------------------------------------------------------


def test_trace_exact_on_diagonal():
    q = QuadraticOracle(np.diag([5.0, 2.0, 1.0]))
    est, stderr = hutchinson_trace(q, np.zeros(3), None, samples=500, seed=3)
    assert abs(est - 8.0) <= 3 * stderr + 1e-12  # diagonal probes are exact
    zero, _ = hutchinson_trace(QuadraticOracle(np.zeros((3, 3))), np.zeros(3), None, samples=20)
    assert zero == 0.0


def test_trace_on_mlp_within_three_stderr_of_dense():
    _, oracle, w, batch = mlp_case()
    h = dense_hessian(oracle, w, batch)
    true_trace = np.trace(h)
    est, stderr = hutchinson_trace(oracle, w, batch, samples=300, seed=5)
    assert abs(est - true_trace) < 3 * stderr + 1e-9


def test_trace_estimator_is_unbiased_over_runs():
    rng = np.random.default_rng(12)
    m = rng.normal(size=(8, 8))
    a = m @ m.T / 8
    q = QuadraticOracle(a)
    true_trace = np.trace(a)
    estimates, errors = [], []
    for run in range(20):
        est, se = hutchinson_trace(q, np.zeros(8), None, samples=64, seed=100 + run)
        estimates.append(est)
        errors.append(se)
    pooled_se = np.sqrt(np.mean(np.square(errors)) / 20)
    assert abs(np.mean(estimates) - true_trace) < 2 * pooled_se


# -- Tr(H Sigma) ------------------------------------------------------------------------


def test_tr_h_sigma_zero_for_identical_batches():
    q = QuadraticOracle(np.diag([3.0, 1.0]))
    batches = [Batch(np.ones((4, 2)), np.zeros(4, dtype=int))] * 8
    assert tr_h_sigma(q, np.ones(2), batches, k=2) == 0.0


def constructed_noise_batches(eps_values, v1):
    # batch mean input -eps*v1 shifts the quadratic gradient by +eps*v1
    return [Batch(np.tile(-e * v1, (1, 1)), np.zeros(1, dtype=int)) for e in eps_values]


def test_tr_h_sigma_recovers_lambda_times_variance():
    q = QuadraticOracle(np.diag([5.0, 2.0, 1.0]))
    rng = np.random.default_rng(6)
    eps = rng.normal(0, 0.3, size=64)
    batches = constructed_noise_batches(eps, np.array([1.0, 0.0, 0.0]))
    est = tr_h_sigma(q, np.array([0.7, 0.1, -0.2]), batches, k=1, seed=0)
    target = 5.0 * np.var(eps, ddof=1)
    assert abs(est - target) / target < 1e-6  # exact up to eigenvector error


def test_tr_h_sigma_scales_quadratically_with_noise():
    q = QuadraticOracle(np.diag([4.0, 1.0]))
    rng = np.random.default_rng(9)
    eps = rng.normal(0, 0.2, size=32)
    v1 = np.array([1.0, 0.0])
    base = tr_h_sigma(q, np.ones(2), constructed_noise_batches(eps, v1), k=1, seed=1)
    doubled = tr_h_sigma(q, np.ones(2), constructed_noise_batches(2 * eps, v1), k=1, seed=1)
    assert abs(doubled / base - 4.0) < 1e-9


def test_tr_h_sigma_invariant_to_batch_order():
    q = QuadraticOracle(np.diag([4.0, 1.0]))
    rng = np.random.default_rng(10)
    eps = rng.normal(0, 0.2, size=16)
    batches = constructed_noise_batches(eps, np.array([1.0, 0.0]))
    forward = tr_h_sigma(q, np.ones(2), batches, k=2, seed=2)
    backward = tr_h_sigma(q, np.ones(2), batches[::-1], k=2, seed=2)
    assert abs(forward - backward) <= 1e-12 * max(1.0, abs(forward))


def test_tr_h_sigma_preconditions():
    q = QuadraticOracle(np.eye(2))
    batches = constructed_noise_batches(np.array([0.1, -0.1]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError, match="at least 1"):
        tr_h_sigma(q, np.zeros(2), batches, k=0)
    with pytest.raises(ValueError, match="at least 2"):
        tr_h_sigma(q, np.zeros(2), batches[:1], k=1)


def test_tr_h_sigma_gradient_fn_hook():
    q = QuadraticOracle(np.diag([2.0, 1.0]))
    batches = constructed_noise_batches(np.array([0.3, -0.3, 0.1, -0.1]), np.array([1.0, 0.0]))
    zero = tr_h_sigma(q, np.zeros(2), batches, k=1, gradient_fn=lambda w, b: np.zeros(2))
    assert zero == 0.0


# -- landscape slices ----------------------------------------------------------------------


def test_quadratic_slice_is_symmetric_parabola():
    q = QuadraticOracle(np.eye(2))
    slc = landscape_slice(q, np.zeros(2), np.array([[1.0, 0.0]]))
    assert slc.losses.shape == (41,)
    assert np.allclose(slc.losses, 0.5 * slc.grid**2, atol=1e-14)
    assert np.allclose(slc.losses, slc.losses[::-1], atol=1e-14)


def test_slice_center_equals_current_loss_bitwise():
    _, oracle, w, batch = mlp_case()
    d = np.zeros(w.size)
    d[0] = 1.0
    slc = landscape_slice(oracle, w, np.stack([d]), batch=batch)
    center = np.flatnonzero(slc.grid == 0.0)[0]
    assert slc.losses[center] == slc.center_loss == oracle.loss(w, batch)


def test_2d_slice_curvature_ratio_matches_eigenvalues():
    q = QuadraticOracle(np.diag([5.0, 1.0]))
    directions = np.eye(2)
    grid = np.linspace(-1, 1, 21)
    slc = landscape_slice(q, np.zeros(2), directions, grid=grid, scale=0.5)
    coef_a = np.polyfit(grid, slc.losses[:, 10], 2)[0]
    coef_b = np.polyfit(grid, slc.losses[10, :], 2)[0]
    assert abs(coef_a / coef_b - 5.0) / 5.0 < 0.05


def test_non_finite_losses_recorded_as_nan():
    class Saturating(LossOracle):
        dim = 2

        def loss(self, w, batch=None):
            return float("inf") if np.linalg.norm(w) > 0.5 else float(np.sum(w**2))

        def grad(self, w, batch=None):
            return 2 * np.asarray(w)

        def hvp(self, w, batch=None, v=None):
            return 2 * np.asarray(v)

    slc = landscape_slice(Saturating(), np.zeros(2), np.array([[1.0, 0.0]]))
    assert np.isnan(slc.losses[0]) and np.isnan(slc.losses[-1])
    assert np.isfinite(slc.losses[20])


def test_slice_validation():
    q = QuadraticOracle(np.eye(2))
    with pytest.raises(ValueError, match="unit-normalized"):
        landscape_slice(q, np.zeros(2), np.array([[2.0, 0.0]]))
    with pytest.raises(ValueError, match="contain 0"):
        landscape_slice(q, np.zeros(2), np.array([[1.0, 0.0]]), grid=np.array([0.5, 1.0]))
    with pytest.raises(ValueError, match="one or two"):
        landscape_slice(q, np.zeros(2), np.ones((3, 2)))


# -- direction helpers and report assembly ----------------------------------------------------


def test_random_direction_unit_and_span_scaled():
    layout = ParamLayout((("w0", (4, 4)), ("b0", (4,))))
    values = np.concatenate([np.full(16, 2.0), np.full(4, 0.01)])
    params = ParamVector(values, layout)
    rng = np.random.default_rng(3)
    d = random_direction(params, rng, per_span=True)
    assert abs(np.linalg.norm(d) - 1.0) < 1e-12
    # span norms should mirror the parameter span norms (up to global scaling)
    ratio_w = np.linalg.norm(d[:16]) / np.linalg.norm(values[:16])
    ratio_b = np.linalg.norm(d[16:]) / np.linalg.norm(values[16:])
    assert abs(ratio_w - ratio_b) / ratio_w < 1e-9


def test_spectrum_report_assembles_all_estimates():
    q = QuadraticOracle(np.diag([5.0, 2.0, 1.0]))
    rng = np.random.default_rng(4)
    batches = [Batch(rng.normal(size=(2, 3)) * 0.1, np.zeros(2, dtype=int)) for _ in range(4)]
    report = spectrum_report(q, np.zeros(3), batches, k=2, hutchinson_samples=32)
    assert len(report.eigenvalues) == 2
    assert report.trace_estimate is not None
    assert report.hutchinson_samples == 32
    assert report.tr_h_sigma is not None


def test_dense_hessian_guard():
    spec = ModelSpec(40, (40,), 20, init_seed=0)
    oracle = MlpOracle(spec)
    with pytest.raises(ValueError, match="limited"):
        dense_hessian(oracle, np.zeros(oracle.dim), None, max_dim=100)
