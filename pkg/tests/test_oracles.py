import numpy as np
import pytest

from fladopt.mlp import MlpOracle, ModelSpec, init_params
from fladopt.oracles import (
    AnchoredOracle,
    Batch,
    CountingOracle,
    QuadraticOracle,
    fd_grad,
    fd_hvp,
)


def test_batch_rejects_bad_shapes():
    with pytest.raises(ValueError, match="at least one example"):
        Batch(np.zeros((0, 3)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError, match="labels shape"):
        Batch(np.zeros((2, 3)), np.zeros(3, dtype=int))
    with pytest.raises(ValueError, match="non-negative"):
        Batch(np.zeros((2, 3)), np.array([0, -1]))


def test_quadratic_half_norm_squared():
    q = QuadraticOracle(np.eye(2))
    assert q.loss(np.array([3.0, 4.0])) == 12.5


def test_quadratic_gradient_is_aw_minus_b():
    q = QuadraticOracle(np.eye(2))
    assert np.array_equal(q.grad(np.array([3.0, 4.0])), [3.0, 4.0])
    saddle = QuadraticOracle(np.diag([1.0, 0.0]))
    assert np.array_equal(saddle.grad(np.array([0.0, 5.0])), [0.0, 0.0])


def test_quadratic_hvp_is_constant_a():
    q = QuadraticOracle(np.diag([2.0, 1.0]))
    v = np.array([1.0, -4.0])
    for w in (np.zeros(2), np.array([100.0, -3.0])):
        assert np.array_equal(q.hvp(w, None, v), [2.0, -4.0])


def test_quadratic_shape_validation():
    with pytest.raises(ValueError, match="square"):
        QuadraticOracle(np.zeros((2, 3)))
    q = QuadraticOracle(np.eye(2))
    with pytest.raises(ValueError, match="feature width"):
        q.grad(np.ones(2), Batch(np.zeros((2, 5)), np.zeros(2, dtype=int)))


def test_quadratic_requires_symmetric_psd():
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticOracle(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="semi-definite"):
        QuadraticOracle(np.diag([1.0, -0.5]))
    QuadraticOracle(np.diag([1.0, 0.0]))  # PSD boundary is fine


def test_quadratic_batch_noise_shifts_gradient_mean():
    q = QuadraticOracle(np.diag([2.0, 1.0]), np.array([0.1, 0.0]))
    w = np.array([1.0, 1.0])
    x = np.array([[0.5, -0.5], [1.5, 0.5]])
    batch = Batch(x, np.zeros(2, dtype=int))
    expected = q.a @ w - q.b - x.mean(axis=0)
    assert np.allclose(q.grad(w, batch), expected, atol=0, rtol=0)


def test_quadratic_grad_norm_grad_unit_case():
    q = QuadraticOracle(np.eye(3))
    w = np.array([3.0, 0.0, 4.0])
    out = q.grad_norm_grad(w, None, c=0.0)
    assert np.allclose(out, w / 5.0, atol=1e-15)


def test_grad_norm_grad_zero_gradient_returns_zero():
    q = QuadraticOracle(np.eye(2))
    out = q.grad_norm_grad(np.zeros(2), None, c=1e-12)
    assert np.array_equal(out, np.zeros(2))
    out0 = q.grad_norm_grad(np.zeros(2), None, c=0.0)
    assert np.array_equal(out0, np.zeros(2))


def test_fd_hvp_exact_on_quadratics():
    a = np.array([[2.0, 0.3], [0.3, 1.0]])
    q = QuadraticOracle(a)
    v = np.array([1.0, 2.0])
    got = fd_hvp(q, np.array([0.4, -0.2]), None, v, eps=1e-4)
    assert np.abs(got - a @ v).max() < 1e-9


def test_fd_hvp_zero_direction_and_bad_eps():
    q = QuadraticOracle(np.eye(2))
    assert np.array_equal(fd_hvp(q, np.ones(2), None, np.zeros(2), 1e-4), np.zeros(2))
    with pytest.raises(ValueError, match="positive finite"):
        fd_hvp(q, np.ones(2), None, np.ones(2), np.inf)
    with pytest.raises(ValueError, match="positive finite"):
        fd_grad(q, np.ones(2), None, eps=0.0)


def test_fd_hvp_second_order_convergence():
    spec = ModelSpec(4, (6,), 3, "tanh", init_seed=9)
    oracle = MlpOracle(spec)
    w = init_params(spec).values
    rng = np.random.default_rng(2)
    batch = Batch(rng.normal(size=(8, 4)), rng.integers(0, 3, size=8))
    v = rng.normal(size=w.size)
    exact = oracle.hvp(w, batch, v)
    err1 = np.linalg.norm(fd_hvp(oracle, w, batch, v, 2e-3) - exact)
    err2 = np.linalg.norm(fd_hvp(oracle, w, batch, v, 1e-3) - exact)
    assert 2.0 < err1 / err2 < 8.0  # roughly quarters when halving eps


def test_anchored_oracle_adds_exact_terms():
    q = QuadraticOracle(np.diag([2.0, 1.0]))
    anchor = np.array([1.0, -1.0])
    a = AnchoredOracle(q, anchor, strength=0.5)
    w = np.array([0.2, 0.4])
    assert abs(a.loss(w) - (q.loss(w) + 0.25 * np.sum((w - anchor) ** 2))) < 1e-15
    assert np.allclose(a.grad(w), q.grad(w) + 0.5 * (w - anchor), atol=1e-15)
    v = np.array([1.0, 2.0])
    assert np.allclose(a.hvp(w, None, v), q.hvp(w, None, v) + 0.5 * v, atol=1e-15)
    g_fd = fd_grad(a, w, None, 1e-6)
    assert np.abs(a.grad(w) - g_fd).max() < 1e-8


def test_anchored_oracle_rejects_negative_strength():
    q = QuadraticOracle(np.eye(2))
    with pytest.raises(ValueError, match="non-negative"):
        AnchoredOracle(q, np.zeros(2), -1.0)


def test_counting_oracle_tracks_call_classes():
    q = QuadraticOracle(np.eye(2))
    counter = CountingOracle(q)
    w = np.array([1.0, 2.0])
    counter.loss(w)
    counter.grad(w)
    counter.grad(w)
    counter.hvp(w, None, w)
    counter.grad_and_norm_grad(w, None)  # fused call counts as one hvp
    counter.grad_norm_grad(w, None)
    assert counter.counts == {"loss": 1, "grad": 2, "hvp": 3}
    counter.reset()
    assert counter.counts == {"loss": 0, "grad": 0, "hvp": 0}


def test_wrappers_forward_model_helpers():
    spec = ModelSpec(3, (4,), 2, init_seed=1)
    oracle = MlpOracle(spec)
    counting = CountingOracle(oracle)
    x = np.zeros((2, 3))
    assert counting.predict_proba(init_params(spec).values, x).shape == (2, 2)
    anchored = AnchoredOracle(oracle, np.zeros(oracle.dim), 0.1)
    assert anchored.logits(init_params(spec).values, x).shape == (2, 2)
