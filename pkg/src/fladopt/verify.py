"""Independent-oracle gate: every analytic quantity checked against a
second route (finite differences, dense eigendecomposition, closed forms,
hand arithmetic). Run via the `verify-oracles` CLI subcommand; any failure
is a red flag for the whole library."""

from __future__ import annotations

import numpy as np

from .continual import MetricsLedger, aaa, acc_final
from .diagnostics import dense_hessian, top_eigenpairs
from .mlp import MlpOracle, ModelSpec, init_params
from .optim import (
    HyperParams,
    OptimizerState,
    Schedule,
    baseline_step,
    flad_step,
    schedule_at,
    update_ema,
)
from .oracles import Batch, QuadraticOracle, fd_grad, fd_grad_norm_grad, fd_hvp

__all__ = ["run_all", "CHECKS"]


def _mlp_case(hidden, activation, seed, batch_size=12, input_dim=8, classes=4):
    spec = ModelSpec(input_dim, hidden, classes, activation, init_seed=seed)
    oracle = MlpOracle(spec)
    w = init_params(spec).values
    rng = np.random.default_rng(seed + 1)
    batch = Batch(
        rng.normal(size=(batch_size, input_dim)), rng.integers(0, classes, size=batch_size)
    )
    return oracle, w, batch


def check_fd_gradient():
    """Analytic gradient vs central differences, quadratic and MLPs <= 5k params."""
    q = QuadraticOracle(np.diag([3.0, 1.0, 0.5]), np.array([0.2, -0.1, 0.0]))
    wq = np.array([0.7, -1.2, 0.4])
    err_q = np.abs(q.grad(wq) - fd_grad(q, wq, None, 1e-5)).max()
    if err_q >= 1e-10:
        return False, f"quadratic max err {err_q:.3e} >= 1e-10"
    worst = 0.0
    for hidden, act in (((24,), "relu"), ((16, 12), "tanh"), ((64, 48), "relu")):
        oracle, w, batch = _mlp_case(hidden, act, seed=3, input_dim=16, classes=6)
        err = np.abs(oracle.grad(w, batch) - fd_grad(oracle, w, batch, 1e-5)).max()
        worst = max(worst, err)
        if err >= 1e-5:
            return False, f"mlp {hidden}/{act} ({oracle.dim} params) max err {err:.3e} >= 1e-5"
    return True, f"max component error {worst:.3e} (< 1e-5)"


def check_fd_hvp():
    """Analytic HVP vs central-difference HVP, relative error < 1e-3."""
    worst = 0.0
    for hidden, act in (((10,), "relu"), ((8, 8), "tanh")):
        oracle, w, batch = _mlp_case(hidden, act, seed=5)
        rng = np.random.default_rng(11)
        for _ in range(3):
            v = rng.normal(size=w.size)
            eps = 1e-4 * (1 + np.linalg.norm(w)) / (1 + np.linalg.norm(v))
            hv = oracle.hvp(w, batch, v)
            hv_fd = fd_hvp(oracle, w, batch, v, eps)
            rel = np.linalg.norm(hv - hv_fd) / np.linalg.norm(hv_fd)
            worst = max(worst, rel)
            if rel >= 1e-3:
                return False, f"mlp {hidden}/{act} rel err {rel:.3e} >= 1e-3"
    q = QuadraticOracle(np.diag([4.0, 2.0]))
    err = np.abs(q.hvp(np.ones(2), None, np.array([1.0, -2.0])) - np.array([4.0, -4.0])).max()
    if err > 1e-12:
        return False, f"quadratic hvp off by {err:.3e}"
    return True, f"max relative error {worst:.3e} (< 1e-3)"


def check_hvp_symmetry_linearity():
    """<Hu, v> == <Hv, u> (rel < 1e-8) and H(au+bv) == aHu + bHv (rel < 1e-10)."""
    oracle, w, batch = _mlp_case((14,), "tanh", seed=7)
    rng = np.random.default_rng(13)
    for _ in range(5):
        u = rng.normal(size=w.size)
        v = rng.normal(size=w.size)
        hu, hv = oracle.hvp(w, batch, u), oracle.hvp(w, batch, v)
        s1, s2 = hu @ v, hv @ u
        sym = abs(s1 - s2) / max(abs(s1), abs(s2), 1e-300)
        if sym >= 1e-8:
            return False, f"symmetry violated: rel {sym:.3e}"
        a, b = rng.normal(), rng.normal()
        lin = oracle.hvp(w, batch, a * u + b * v) - (a * hu + b * hv)
        rel = np.linalg.norm(lin) / max(np.linalg.norm(a * hu + b * hv), 1e-300)
        if rel >= 1e-10:
            return False, f"linearity violated: rel {rel:.3e}"
    return True, "symmetry < 1e-8, linearity < 1e-10"


def check_fd_hvp_richardson():
    """Halving the FD step should cut the FD-HVP error by roughly 4x."""
    oracle, w, batch = _mlp_case((10,), "tanh", seed=9)
    rng = np.random.default_rng(17)
    v = rng.normal(size=w.size)
    exact = oracle.hvp(w, batch, v)
    eps = 2e-3
    err1 = np.linalg.norm(fd_hvp(oracle, w, batch, v, eps) - exact)
    err2 = np.linalg.norm(fd_hvp(oracle, w, batch, v, eps / 2) - exact)
    ratio = err1 / err2
    if not 2.0 < ratio < 8.0:
        return False, f"error ratio {ratio:.2f} outside (2, 8): not second order"
    return True, f"error ratio {ratio:.2f} (expect about 4)"


def check_grad_norm_grad():
    """Fused gradient-norm gradient vs FD of the scalar map |grad(w)|."""
    worst = 0.0
    for act in ("relu", "tanh"):
        oracle, w, batch = _mlp_case((12,), act, seed=15)
        s = oracle.grad_norm_grad(w, batch, c=1e-12)
        s_fd = fd_grad_norm_grad(oracle, w, batch, 1e-5)
        rel = np.linalg.norm(s - s_fd) / np.linalg.norm(s_fd)
        worst = max(worst, rel)
        if rel >= 1e-2:
            return False, f"{act}: rel err {rel:.3e} >= 1e-2"
    return True, f"max relative error {worst:.3e} (< 1e-2)"


def check_dense_hessian_eigen():
    """Power-iteration top eigenvalue vs dense eigendecomposition (d <= 200)."""
    oracle, w, batch = _mlp_case((10,), "tanh", seed=21, input_dim=6, classes=3)
    assert oracle.dim <= 200
    h = dense_hessian(oracle, w, batch)
    dense_top = float(np.linalg.eigvalsh((h + h.T) / 2)[-1])
    report = top_eigenpairs(oracle, w, batch, k=1, iters=300, seed=1)
    rel = abs(report.eigenvalues[0] - dense_top) / abs(dense_top)
    if rel >= 1e-4:
        return False, f"rel disagreement {rel:.3e} >= 1e-4"
    return True, f"top eigenvalue rel error {rel:.3e} over {oracle.dim} params (< 1e-4)"


def check_ema_closed_form():
    """EMA recursion equals lambda^k m0 + (1-lambda) sum lambda^(k-1-j) g_j."""
    rng = np.random.default_rng(23)
    lam = 0.9
    m0 = rng.normal(size=6)
    gs = [rng.normal(size=6) for _ in range(12)]
    m = m0.copy()
    for g in gs:
        m = update_ema(m, g, lam)
    k = len(gs)
    closed = lam**k * m0 + (1 - lam) * sum(lam ** (k - 1 - j) * g for j, g in enumerate(gs))
    rel = np.linalg.norm(m - closed) / np.linalg.norm(closed)
    if rel >= 1e-10:
        return False, f"rel deviation {rel:.3e} >= 1e-10"
    return True, f"closed form matches to rel {rel:.3e}"


def check_hand_arithmetic():
    """Pinned hand computations: steps, EMA sequence, metrics, schedules."""
    q = QuadraticOracle(np.diag([2.0, 1.0]))
    hp = HyperParams(eta=0.1, rho=0.1, gamma=0.0, sigma=0.0, c=0.0, momentum=0.0, weight_decay=0.0)
    w1, _ = flad_step(q, np.array([1.0, 0.0]), None, OptimizerState.fresh(2), hp)
    if np.abs(w1 - np.array([0.78, 0.0])).max() > 1e-12:
        return False, f"flad quadratic step gave {w1}, expected (0.78, 0)"

    hp_z = HyperParams(eta=0.1, rho=0.5, sigma=0.0, c=0.0, momentum=0.0, weight_decay=0.0)
    w2, _ = baseline_step("zeroth", QuadraticOracle(np.eye(2)), np.array([3.0, 4.0]), None,
                          OptimizerState.fresh(2), hp_z)
    if np.abs(w2 - np.array([2.67, 3.56])).max() > 1e-12:
        return False, f"zeroth step gave {w2}, expected (2.67, 3.56)"

    m = np.zeros(1)
    seq = []
    for g in (1.0, 2.0, 3.0):
        m = update_ema(m, np.array([g]), 0.5)
        seq.append(m[0])
    if np.abs(np.array(seq) - [0.5, 1.25, 2.125]).max() > 1e-12:
        return False, f"EMA sequence gave {seq}"

    ledger = MetricsLedger()
    ledger.add_row([1.0])
    ledger.add_row([0.8, 0.9])
    if abs(acc_final(ledger) - 0.85) > 1e-12 or abs(aaa(ledger) - 0.925) > 1e-12:
        return False, f"metrics gave Acc={acc_final(ledger)}, AAA={aaa(ledger)}"

    eta_i, rho_i, _ = schedule_at(Schedule(theorem_mode=True), 4, 100, 0.1, 0.2)
    if abs(eta_i - 0.05) > 1e-12 or abs(rho_i - 0.2 / np.sqrt(2)) > 1e-12:
        return False, f"theorem schedule gave ({eta_i}, {rho_i})"
    return True, "flad step, zeroth step, EMA, metrics, theorem schedule all exact"


CHECKS = [
    ("fd-gradient", check_fd_gradient),
    ("fd-hvp", check_fd_hvp),
    ("hvp-symmetry-linearity", check_hvp_symmetry_linearity),
    ("fd-hvp-richardson", check_fd_hvp_richardson),
    ("grad-norm-grad", check_grad_norm_grad),
    ("dense-hessian-eigen", check_dense_hessian_eigen),
    ("ema-closed-form", check_ema_closed_form),
    ("hand-arithmetic", check_hand_arithmetic),
]


def run_all(printer=print) -> bool:
    """Run every oracle check; prints one PASS/FAIL line each."""
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        all_ok &= ok
        printer(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
