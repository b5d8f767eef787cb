"""Loss oracles: differentiable objectives exposing loss, gradient, and
exact Hessian-vector products over a flat parameter vector.

Two families ship here: a data-driven quadratic (constant Hessian, handy
for convergence studies and as ground truth for curvature estimators) and
wrappers that instrument or augment any oracle. The MLP oracle lives in
`mlp.py`. Finite-difference versions of grad/hvp are provided strictly as
test oracles and never enter a training path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Batch",
    "LossOracle",
    "QuadraticOracle",
    "AnchoredOracle",
    "CountingOracle",
    "fd_grad",
    "fd_hvp",
    "fd_grad_norm_grad",
]


@dataclass
class Batch:
    """A minibatch: inputs (b x d) and integer class labels (b,)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError("batch inputs must be 2-D (examples x features)")
        if self.inputs.shape[0] < 1:
            raise ValueError("batch must contain at least one example")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match batch size {self.inputs.shape[0]}"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


class LossOracle:
    """Interface for differentiable empirical losses over flat parameters.

    Implementations must be pure: repeated calls with identical inputs
    return bitwise-identical results. `dim` is the parameter count.
    """

    dim: int

    def loss(self, w: np.ndarray, batch: Batch | None) -> float:
        raise NotImplementedError

    def grad(self, w: np.ndarray, batch: Batch | None) -> np.ndarray:
        raise NotImplementedError

    def hvp(self, w: np.ndarray, batch: Batch | None, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_norm_grad(self, w: np.ndarray, batch: Batch | None, c: float = 1e-12) -> np.ndarray:
        """Gradient of the gradient norm: hvp(w, g / (|g| + c)) with g = grad(w).

        Cost-equivalent to a single HVP (the local gradient falls out of the
        same double-backward pass); instrumented wrappers count it as one.
        """
        g, s = self.grad_and_norm_grad(w, batch, c)
        return s

    def grad_and_norm_grad(
        self, w: np.ndarray, batch: Batch | None, c: float = 1e-12
    ) -> tuple[np.ndarray, np.ndarray]:
        """Fused (gradient, gradient-norm-gradient) at one point."""
        g = self.grad(w, batch)
        denom = float(np.linalg.norm(g)) + c
        if denom == 0.0:
            return g, np.zeros_like(g)
        return g, self.hvp(w, batch, g / denom)

    def _check_dim(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"parameter vector has shape {w.shape}, expected ({self.dim},)")
        return w


class QuadraticOracle(LossOracle):
    """Quadratic loss 0.5 w'Aw - (b + x_i)'w averaged over batch rows x_i.

    A must be symmetric positive semi-definite (checked at construction to
    1e-10). The per-example linear term makes batch gradients stochastic
    while keeping the population objective 0.5 w'Aw - b'w whenever the
    inputs are centred; passing batch=None evaluates that population loss.
    The Hessian is the constant A.
    """

    def __init__(self, a_matrix: np.ndarray, b_vector: np.ndarray | None = None):
        a = np.asarray(a_matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("A must be a square matrix")
        if np.max(np.abs(a - a.T)) > 1e-10:
            raise ValueError("A must be symmetric (tolerance 1e-10)")
        eigmin = float(np.linalg.eigvalsh(a)[0])
        if eigmin < -1e-10:
            raise ValueError(f"A must be positive semi-definite, min eigenvalue {eigmin:g}")
        self.a = a
        self.dim = a.shape[0]
        self.b = (
            np.zeros(self.dim)
            if b_vector is None
            else np.asarray(b_vector, dtype=np.float64).reshape(self.dim)
        )

    def _linear_term(self, batch: Batch | None) -> np.ndarray:
        if batch is None:
            return self.b
        if batch.inputs.shape[1] != self.dim:
            raise ValueError(
                f"batch feature width {batch.inputs.shape[1]} does not match dimension {self.dim}"
            )
        return self.b + batch.inputs.mean(axis=0)

    def loss(self, w, batch=None):
        w = self._check_dim(w)
        return float(0.5 * w @ self.a @ w - self._linear_term(batch) @ w)

    def grad(self, w, batch=None):
        w = self._check_dim(w)
        return self.a @ w - self._linear_term(batch)

    def hvp(self, w, batch=None, v=None):
        self._check_dim(w)
        v = self._check_dim(v)
        return self.a @ v


class AnchoredOracle(LossOracle):
    """Adds a quadratic anchor 0.5*strength*|w - anchor|^2 to a base loss.

    Stand-in for regularization-style continual learning: the anchor is the
    previous phase's solution. Gradient and HVP pick up the exact extra
    terms, so every optimizer kind composes with it unchanged.
    """

    def __init__(self, inner: LossOracle, anchor: np.ndarray, strength: float):
        if strength < 0:
            raise ValueError("anchor strength must be non-negative")
        self.inner = inner
        self.anchor = np.asarray(anchor, dtype=np.float64)
        self.strength = float(strength)
        self.dim = inner.dim
        if self.anchor.shape != (self.dim,):
            raise ValueError("anchor shape does not match oracle dimension")

    def loss(self, w, batch=None):
        w = self._check_dim(w)
        return self.inner.loss(w, batch) + 0.5 * self.strength * float(
            np.sum((w - self.anchor) ** 2)
        )

    def grad(self, w, batch=None):
        w = self._check_dim(w)
        return self.inner.grad(w, batch) + self.strength * (w - self.anchor)

    def hvp(self, w, batch=None, v=None):
        v = self._check_dim(v)
        return self.inner.hvp(w, batch, v) + self.strength * v

    def __getattr__(self, name):
        # forward model-specific helpers (predict_proba, logits, ...)
        if name == "inner":
            raise AttributeError(name)
        return getattr(self.inner, name)


class CountingOracle(LossOracle):
    """Counts oracle evaluations by class: loss, grad, and hvp.

    A fused grad_norm_grad call increments the hvp counter only; its
    internal gradient is a byproduct of the same double-backward pass.
    """

    def __init__(self, inner: LossOracle):
        self.inner = inner
        self.dim = inner.dim
        self.counts = {"loss": 0, "grad": 0, "hvp": 0}

    def reset(self):
        self.counts = {"loss": 0, "grad": 0, "hvp": 0}

    def loss(self, w, batch=None):
        self.counts["loss"] += 1
        return self.inner.loss(w, batch)

    def grad(self, w, batch=None):
        self.counts["grad"] += 1
        return self.inner.grad(w, batch)

    def hvp(self, w, batch=None, v=None):
        self.counts["hvp"] += 1
        return self.inner.hvp(w, batch, v)

    def grad_and_norm_grad(self, w, batch=None, c=1e-12):
        self.counts["hvp"] += 1
        return self.inner.grad_and_norm_grad(w, batch, c)

    def __getattr__(self, name):
        if name == "inner":
            raise AttributeError(name)
        return getattr(self.inner, name)


def fd_grad(oracle: LossOracle, w: np.ndarray, batch: Batch | None, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient. Test oracle only."""
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError("eps must be a positive finite number")
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    for i in range(w.size):
        wp = w.copy()
        wm = w.copy()
        wp[i] += eps
        wm[i] -= eps
        out[i] = (oracle.loss(wp, batch) - oracle.loss(wm, batch)) / (2 * eps)
    return out


def fd_hvp(
    oracle: LossOracle, w: np.ndarray, batch: Batch | None, v: np.ndarray, eps: float
) -> np.ndarray:
    """Central-difference Hessian-vector product (grad(w+eps*v) - grad(w-eps*v)) / 2eps.

    Test oracle only; never used in a training path.
    """
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError("eps must be a positive finite number")
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return (oracle.grad(w + eps * v, batch) - oracle.grad(w - eps * v, batch)) / (2 * eps)


def fd_grad_norm_grad(
    oracle: LossOracle, w: np.ndarray, batch: Batch | None, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of the scalar map w -> |grad(w)|. Test oracle only."""
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError("eps must be a positive finite number")
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    for i in range(w.size):
        wp = w.copy()
        wm = w.copy()
        wp[i] += eps
        wm[i] -= eps
        np_norm = np.linalg.norm
        out[i] = (np_norm(oracle.grad(wp, batch)) - np_norm(oracle.grad(wm, batch))) / (2 * eps)
    return out
