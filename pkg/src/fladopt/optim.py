"""The sharpness-aware optimizer family over flat parameter vectors.

Kinds:

* ``sgd``       plain descent (momentum + weight decay).
* ``zeroth``    SAM-style: ascend along the raw batch gradient, descend
                from the perturbed point.
* ``first``     GAM-style: descend the gradient-norm gradient, itself
                evaluated at a perturbed point; the perturbation direction
                is configurable (see perturbation variants).
* ``combined``  zeroth + first with raw (non-decomposed) perturbations.
* ``flad``      the decomposed combination: both perturbations keep only
                the stochastic-noise component, obtained by subtracting
                sigma times an EMA tracker from the raw direction.
* ``flad-0th``  decomposed zeroth-order only.
* ``flad-1st``  decomposed first-order only.

Every step consumes one minibatch and returns the new parameters plus a
new optimizer state; nothing is mutated in place. Per step, ``flad`` and
``combined`` spend exactly 2 gradient and 2 HVP-class oracle evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .oracles import Batch, LossOracle
from .params import ParamVector

__all__ = [
    "KINDS",
    "VARIANTS",
    "HyperParams",
    "OptimizerState",
    "Schedule",
    "NumericalAbort",
    "zeroth_perturbation",
    "decompose",
    "update_ema",
    "variant_perturbation",
    "VariantContext",
    "flad_step",
    "baseline_step",
    "optimizer_step",
    "schedule_at",
]

KINDS = ("sgd", "zeroth", "first", "combined", "flad", "flad-0th", "flad-1st")
VARIANTS = ("standard", "pre-batch", "random", "full-component", "noise-component")

_FIRST_ORDER_KINDS = ("first", "flad-1st")


@dataclass(frozen=True)
class HyperParams:
    """Optimizer hyperparameters; defaults follow the reference settings."""

    eta: float = 0.1
    rho: float = 0.2
    gamma: float = 0.5
    sigma: float = 0.5
    lambda0: float = 0.9
    lambda1: float = 0.9
    c: float = 1e-12
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.rho < 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if not 0 <= self.sigma <= 1:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        for name in ("lambda0", "lambda1"):
            lam = getattr(self, name)
            if not 0 < lam < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {lam}")
        if self.c < 0:
            raise ValueError(f"c must be non-negative, got {self.c}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


@dataclass
class OptimizerState:
    """EMA trackers, momentum buffer, and step bookkeeping for one task."""

    m: np.ndarray
    n: np.ndarray
    velocity: np.ndarray
    step: int = 0
    epoch_in_task: int = 1
    prev_first_dir: np.ndarray | None = None
    noise_rng: np.random.Generator | None = None

    @classmethod
    def fresh(cls, dim: int, noise_rng: np.random.Generator | None = None) -> "OptimizerState":
        return cls(
            m=np.zeros(dim),
            n=np.zeros(dim),
            velocity=np.zeros(dim),
            step=0,
            epoch_in_task=1,
            noise_rng=noise_rng,
        )


@dataclass(frozen=True)
class Schedule:
    """Per-epoch learning-rate / radius schedule and sharpness window.

    ``lr_decay_points`` are fractions of the epoch budget after which the
    learning rate is multiplied by 0.1 (cumulative). ``theorem_mode``
    replaces the piecewise schedule with eta/sqrt(i) and rho/i**0.25.
    ``flad_window`` bounds the fraction of epochs in which the sharpness
    machinery runs; outside it every kind degrades to plain SGD.
    """

    lr_decay_points: tuple[float, ...] = (0.3, 0.6, 0.85)
    theorem_mode: bool = False
    flad_window: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_points", tuple(float(p) for p in self.lr_decay_points))
        object.__setattr__(self, "flad_window", tuple(float(x) for x in self.flad_window))
        start, end = self.flad_window
        if not (0 <= start < end <= 1):
            raise ValueError(f"flad_window must satisfy 0 <= start < end <= 1, got {self.flad_window}")
        if any(not 0 < p < 1 for p in self.lr_decay_points):
            raise ValueError("lr decay points must lie strictly inside (0, 1)")


class NumericalAbort(ArithmeticError):
    """A step hit a non-finite quantity; carries what and where."""

    def __init__(self, quantity: str, detail: str, step: int | None = None):
        self.quantity = quantity
        self.detail = detail
        self.step = step
        self.context: dict = {}
        super().__init__(f"non-finite {quantity} at step {step}: {detail}")


def _check_finite(arr: np.ndarray, quantity: str, step: int) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr))
        detail = f"{bad.size} non-finite entries, first at index {int(bad[0])} = {arr[bad[0]]}"
        raise NumericalAbort(quantity, detail, step)


def zeroth_perturbation(g_noise: np.ndarray, rho: float, c: float) -> np.ndarray:
    """Ascent offset rho * g / (|g| + c); norm never exceeds rho."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    g = np.asarray(g_noise, dtype=np.float64)
    nrm = float(np.linalg.norm(g))
    denom = nrm + c
    if rho == 0.0 or nrm == 0.0 or denom == 0.0:
        return np.zeros_like(g)
    delta = g * (rho / denom)
    dn = float(np.linalg.norm(delta))
    while dn > rho:  # shave off at most a few ulp of rounding overshoot
        delta = delta * (rho / dn)
        dn = float(np.linalg.norm(delta))
    return delta


def decompose(g_batch: np.ndarray, tracker: np.ndarray, sigma: float) -> np.ndarray:
    """Stochastic-noise component: g_batch - sigma * tracker."""
    g = np.asarray(g_batch, dtype=np.float64)
    t = np.asarray(tracker, dtype=np.float64)
    if g.shape != t.shape:
        raise ValueError(f"length mismatch: {g.shape} vs {t.shape}")
    return g - sigma * t


def update_ema(tracker: np.ndarray, g_new: np.ndarray, lam: float) -> np.ndarray:
    """Exponential moving average lam * tracker + (1 - lam) * g_new."""
    if not 0 < lam < 1:
        raise ValueError(f"EMA factor must lie in (0, 1), got {lam}")
    t = np.asarray(tracker, dtype=np.float64)
    g = np.asarray(g_new, dtype=np.float64)
    if t.shape != g.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {g.shape}")
    return lam * t + (1.0 - lam) * g


@dataclass
class VariantContext:
    """Inputs for choosing a first-order perturbation direction."""

    direction: np.ndarray  # raw gradient-norm gradient of this batch
    tracker: np.ndarray  # EMA of past directions, already updated
    sigma: float
    previous: np.ndarray | None = None  # previous batch's raw direction
    rng: np.random.Generator | None = None


def variant_perturbation(variant: str, ctx: VariantContext) -> np.ndarray:
    """Direction for the first-order perturbation, before rho-scaling.

    ``pre-batch`` falls back to the standard direction on the first step of
    a task, when no previous-batch direction exists yet.
    """
    if variant == "standard":
        return ctx.direction
    if variant == "pre-batch":
        return ctx.direction if ctx.previous is None else ctx.previous
    if variant == "random":
        if ctx.rng is None:
            raise ValueError("random variant requires an rng in the context")
        draw = ctx.rng.normal(size=ctx.direction.shape)
        nrm = float(np.linalg.norm(draw))
        return draw / nrm if nrm > 0 else draw
    if variant == "full-component":
        return ctx.sigma * ctx.tracker
    if variant == "noise-component":
        return decompose(ctx.direction, ctx.tracker, ctx.sigma)
    raise ValueError(f"unknown perturbation variant {variant!r}, expected one of {VARIANTS}")


def _unwrap(w) -> tuple[np.ndarray, object | None]:
    if isinstance(w, ParamVector):
        return w.values, w.layout
    return np.asarray(w, dtype=np.float64), None


def _rewrap(values: np.ndarray, layout) -> np.ndarray | ParamVector:
    return values if layout is None else ParamVector(values, layout)


def _descend(
    w: np.ndarray, d: np.ndarray, state: OptimizerState, hp: HyperParams
) -> tuple[np.ndarray, np.ndarray]:
    d = d + hp.weight_decay * w
    velocity = hp.momentum * state.velocity + d
    return w - hp.eta * velocity, velocity


def _norm_dir(g: np.ndarray, c: float) -> np.ndarray:
    denom = float(np.linalg.norm(g)) + c
    if denom == 0.0:
        return np.zeros_like(g)
    return g / denom


def flad_step(
    oracle: LossOracle,
    w,
    batch: Batch | None,
    state: OptimizerState,
    hp: HyperParams,
):
    """One decomposed sharpness step (2 grad + 2 HVP oracle evaluations).

    Sequence: batch gradient; update m; perturb along the noise component
    of the gradient; gradient at the perturbed point (g0); gradient-norm
    gradient at w; update n; perturb along its noise component; gradient-
    norm gradient at that perturbed point (g1); descend along g0 + gamma*g1
    with weight decay folded in and momentum applied. If both noise
    components vanish the step degrades to plain SGD on the batch gradient.
    """
    w_arr, layout = _unwrap(w)
    t = state.step

    g_hat = oracle.grad(w_arr, batch)
    _check_finite(g_hat, "batch gradient", t)
    m = update_ema(state.m, g_hat, hp.lambda0)
    noise0 = decompose(g_hat, m, hp.sigma)
    delta0 = zeroth_perturbation(noise0, hp.rho, hp.c)
    g0 = oracle.grad(w_arr + delta0, batch)
    _check_finite(g0, "perturbed gradient", t)

    s = oracle.hvp(w_arr, batch, _norm_dir(g_hat, hp.c))
    _check_finite(s, "gradient-norm gradient", t)
    n = update_ema(state.n, s, hp.lambda1)
    noise1 = decompose(s, n, hp.sigma)
    delta1 = zeroth_perturbation(noise1, hp.rho, hp.c)
    g1 = oracle.grad_norm_grad(w_arr + delta1, batch, hp.c)
    _check_finite(g1, "perturbed gradient-norm gradient", t)

    if not noise0.any() and not noise1.any():
        d = g_hat
    else:
        d = g0 + hp.gamma * g1
    w_new, velocity = _descend(w_arr, d, state, hp)
    _check_finite(w_new, "updated parameters", t)
    new_state = replace(state, m=m, n=n, velocity=velocity, step=t + 1)
    return _rewrap(w_new, layout), new_state


def baseline_step(
    kind: str,
    oracle: LossOracle,
    w,
    batch: Batch | None,
    state: OptimizerState,
    hp: HyperParams,
    variant: str = "standard",
):
    """One step of any non-flad kind (see module docstring for the menu)."""
    if kind == "flad":
        raise ValueError("use flad_step for the flad kind")
    if kind not in KINDS:
        raise ValueError(f"unknown optimizer kind {kind!r}, expected one of {KINDS}")
    w_arr, layout = _unwrap(w)
    t = state.step
    m, n = state.m, state.n
    prev = state.prev_first_dir

    if kind == "sgd":
        g_hat = oracle.grad(w_arr, batch)
        _check_finite(g_hat, "batch gradient", t)
        d = g_hat
    elif kind in ("zeroth", "flad-0th"):
        g_hat = oracle.grad(w_arr, batch)
        _check_finite(g_hat, "batch gradient", t)
        if kind == "flad-0th":
            m = update_ema(m, g_hat, hp.lambda0)
            direction = decompose(g_hat, m, hp.sigma)
        else:
            direction = g_hat
        delta0 = zeroth_perturbation(direction, hp.rho, hp.c)
        g0 = oracle.grad(w_arr + delta0, batch)
        _check_finite(g0, "perturbed gradient", t)
        d = g0
    elif kind in _FIRST_ORDER_KINDS:
        effective_variant = "noise-component" if kind == "flad-1st" else variant
        g_hat, s = oracle.grad_and_norm_grad(w_arr, batch, hp.c)
        _check_finite(s, "gradient-norm gradient", t)
        n = update_ema(n, s, hp.lambda1)
        ctx = VariantContext(
            direction=s, tracker=n, sigma=hp.sigma, previous=prev, rng=state.noise_rng
        )
        direction = variant_perturbation(effective_variant, ctx)
        delta1 = zeroth_perturbation(direction, hp.rho, hp.c)
        g1 = oracle.grad_norm_grad(w_arr + delta1, batch, hp.c)
        _check_finite(g1, "perturbed gradient-norm gradient", t)
        d = g1
        prev = s
    elif kind == "combined":
        g_hat = oracle.grad(w_arr, batch)
        _check_finite(g_hat, "batch gradient", t)
        delta0 = zeroth_perturbation(g_hat, hp.rho, hp.c)
        g0 = oracle.grad(w_arr + delta0, batch)
        _check_finite(g0, "perturbed gradient", t)
        s = oracle.hvp(w_arr, batch, _norm_dir(g_hat, hp.c))
        _check_finite(s, "gradient-norm gradient", t)
        delta1 = zeroth_perturbation(s, hp.rho, hp.c)
        g1 = oracle.grad_norm_grad(w_arr + delta1, batch, hp.c)
        _check_finite(g1, "perturbed gradient-norm gradient", t)
        d = g0 + hp.gamma * g1

    w_new, velocity = _descend(w_arr, d, state, hp)
    _check_finite(w_new, "updated parameters", t)
    new_state = replace(state, m=m, n=n, velocity=velocity, step=t + 1, prev_first_dir=prev)
    return _rewrap(w_new, layout), new_state


def optimizer_step(
    kind: str,
    oracle: LossOracle,
    w,
    batch: Batch | None,
    state: OptimizerState,
    hp: HyperParams,
    variant: str = "standard",
):
    """Dispatch one step of the requested kind."""
    if kind == "flad":
        if variant != "noise-component":
            raise ValueError("flad requires the noise-component perturbation variant")
        return flad_step(oracle, w, batch, state, hp)
    return baseline_step(kind, oracle, w, batch, state, hp, variant)


def schedule_at(
    sched: Schedule, epoch: int, total_epochs: int, base_eta: float, base_rho: float
) -> tuple[float, float, bool]:
    """Resolve (eta_i, rho_i, sharpness-active) for a 1-based epoch index.

    Decays apply from the first epoch after the given fraction of the
    budget has completed; the sharpness window is half-open on the right.
    """
    if not 1 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside 1..{total_epochs}")
    completed = (epoch - 1) / total_epochs
    if sched.theorem_mode:
        eta_i = base_eta / math.sqrt(epoch)
        rho_i = base_rho / epoch**0.25
    else:
        n_decays = sum(completed >= p for p in sched.lr_decay_points)
        eta_i = base_eta * 0.1**n_decays
        rho_i = base_rho
    start, end = sched.flad_window
    active = start <= completed < end
    return eta_i, rho_i, active
