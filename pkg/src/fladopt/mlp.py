"""Multilayer perceptron with exact reverse-mode gradients and exact
Hessian-vector products via Pearlmutter's forward-over-reverse trick.

Everything operates on a flat float64 parameter vector laid out as
(w0, b0, w1, b1, ...). The HVP runs one extra tangent-forward and one
tangent-backward sweep over the stored activations, so it costs about one
more backward pass than a gradient and is analytically exact (for relu,
exact almost everywhere). No finite differences anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracles import Batch, LossOracle
from .params import ParamLayout, ParamVector
from .seeding import child_rng

__all__ = ["ModelSpec", "init_params", "MlpOracle", "grow_head"]

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a fully connected classifier."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_classes: int
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if any(h < 1 for h in self.hidden_widths):
            raise ValueError("zero-width hidden layer in model spec")
        if self.output_classes < 2:
            raise ValueError("output_classes must be at least 2")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_classes)

    def layout(self) -> ParamLayout:
        spans = []
        dims = self.layer_dims
        for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
            spans.append((f"w{i}", (din, dout)))
            spans.append((f"b{i}", (dout,)))
        return ParamLayout(tuple(spans))

    @property
    def param_count(self) -> int:
        return self.layout().size


def init_params(spec: ModelSpec) -> ParamVector:
    """Random weights, zero biases; deterministic given spec.init_seed.

    Weight scale follows He (std sqrt(2/fan_in)) for relu and Xavier
    (std sqrt(2/(fan_in+fan_out))) for tanh. Each layer draws from its own
    child stream, so adding layers never shifts earlier draws.
    """
    vec = ParamVector(np.zeros(spec.param_count), spec.layout())
    dims = spec.layer_dims
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        rng = child_rng(spec.init_seed, "init", i)
        if spec.activation == "relu":
            std = np.sqrt(2.0 / din)
        else:
            std = np.sqrt(2.0 / (din + dout))
        vec.view(f"w{i}")[...] = rng.normal(0.0, std, size=(din, dout))
    return vec


def grow_head(spec: ModelSpec, params: ParamVector, extra_classes: int) -> tuple[ModelSpec, ParamVector]:
    """Widen the output layer by `extra_classes`, zero-initialising new units.

    Existing parameters are copied verbatim; only the last weight matrix
    gains zero columns and the last bias gains zero entries.
    """
    if extra_classes < 0:
        raise ValueError("extra_classes must be non-negative")
    if extra_classes == 0:
        return spec, params
    new_spec = ModelSpec(
        spec.input_dim,
        spec.hidden_widths,
        spec.output_classes + extra_classes,
        spec.activation,
        spec.init_seed,
    )
    new_vec = ParamVector(np.zeros(new_spec.param_count), new_spec.layout())
    last = len(spec.layer_dims) - 2
    for i in range(last):
        new_vec.view(f"w{i}")[...] = params.view(f"w{i}")
        new_vec.view(f"b{i}")[...] = params.view(f"b{i}")
    old_w = params.view(f"w{last}")
    old_b = params.view(f"b{last}")
    new_vec.view(f"w{last}")[:, : spec.output_classes] = old_w
    new_vec.view(f"b{last}")[: spec.output_classes] = old_b
    return new_spec, new_vec


class MlpOracle(LossOracle):
    """Mean cross-entropy of an MLP classifier, with exact grad and HVP."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.dim = spec.param_count
        dims = spec.layer_dims
        self._shapes = list(zip(dims[:-1], dims[1:]))
        offsets = []
        pos = 0
        for din, dout in self._shapes:
            offsets.append((pos, pos + din * dout, pos + din * dout + dout))
            pos += din * dout + dout
        self._offsets = offsets

    # -- plumbing ---------------------------------------------------------

    def _unpack(self, w: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        ws, bs = [], []
        for (din, dout), (start, mid, stop) in zip(self._shapes, self._offsets):
            ws.append(w[start:mid].reshape(din, dout))
            bs.append(w[mid:stop])
        return ws, bs

    def _flatten(self, dws: list[np.ndarray], dbs: list[np.ndarray]) -> np.ndarray:
        out = np.empty(self.dim)
        for dw, db, (start, mid, stop) in zip(dws, dbs, self._offsets):
            out[start:mid] = dw.ravel()
            out[mid:stop] = db
        return out

    def _check_batch(self, batch: Batch | None) -> Batch:
        if batch is None:
            raise ValueError("MLP oracle requires a batch")
        if batch.inputs.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"batch feature width {batch.inputs.shape[1]} does not match "
                f"input_dim {self.spec.input_dim}"
            )
        if batch.labels.max() >= self.spec.output_classes:
            raise ValueError("batch contains a label outside the model's classes")
        return batch

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.spec.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_deriv(self, a: np.ndarray) -> np.ndarray:
        # derivative expressed through the activation value
        if self.spec.activation == "relu":
            return (a > 0.0).astype(np.float64)
        return 1.0 - a * a

    def _forward(self, w: np.ndarray, inputs: np.ndarray) -> list[np.ndarray]:
        ws, bs = self._unpack(w)
        acts = [inputs]
        a = inputs
        n_layers = len(ws)
        for layer, (wl, bl) in enumerate(zip(ws, bs)):
            z = a @ wl + bl
            a = z if layer == n_layers - 1 else self._act(z)
            acts.append(a)
        return acts

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def logits(self, w: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        w = self._check_dim(w)
        with np.errstate(over="ignore", invalid="ignore"):
            return self._forward(w, np.asarray(inputs, dtype=np.float64))[-1]

    def predict_proba(self, w: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return self._softmax(self.logits(w, inputs))

    # -- loss / gradient ---------------------------------------------------

    def loss(self, w, batch=None):
        w = self._check_dim(w)
        batch = self._check_batch(batch)
        # non-finite parameters surface as a non-finite loss, not a warning
        with np.errstate(over="ignore", invalid="ignore"):
            logits = self._forward(w, batch.inputs)[-1]
            shifted = logits - logits.max(axis=1, keepdims=True)
            lse = np.log(np.exp(shifted).sum(axis=1))
            loglik = shifted[np.arange(batch.size), batch.labels] - lse
            return float(-loglik.mean())

    def _backward(
        self, ws: list[np.ndarray], acts: list[np.ndarray], g_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
        """Reverse sweep from the logits adjoint g_out.

        Returns per-layer weight/bias gradients plus the intermediate
        adjoints (deltas, d_acts) the tangent sweep reuses.
        """
        n_layers = len(ws)
        deltas = [None] * n_layers
        d_acts = [None] * n_layers  # d_acts[l] = adjoint of acts[l], defined for l >= 1
        deltas[-1] = g_out
        for layer in range(n_layers - 1, 0, -1):
            da = deltas[layer] @ ws[layer].T
            d_acts[layer] = da
            deltas[layer - 1] = da * self._act_deriv(acts[layer])
        dws = [acts[layer].T @ deltas[layer] for layer in range(n_layers)]
        dbs = [deltas[layer].sum(axis=0) for layer in range(n_layers)]
        return dws, dbs, deltas, d_acts

    def grad(self, w, batch=None):
        w = self._check_dim(w)
        batch = self._check_batch(batch)
        with np.errstate(over="ignore", invalid="ignore"):
            acts = self._forward(w, batch.inputs)
            probs = self._softmax(acts[-1])
            g_out = probs.copy()
            g_out[np.arange(batch.size), batch.labels] -= 1.0
            g_out /= batch.size
            dws, dbs, _, _ = self._backward(self._unpack(w)[0], acts, g_out)
            return self._flatten(dws, dbs)

    # -- exact HVP ----------------------------------------------------------

    def _tangent(
        self,
        ws: list[np.ndarray],
        acts: list[np.ndarray],
        probs: np.ndarray,
        deltas: list[np.ndarray],
        d_acts: list[np.ndarray],
        v: np.ndarray,
        batch_size: int,
    ) -> np.ndarray:
        """Directional derivative of the gradient along v (one HVP)."""
        vs, cs = self._unpack(v)
        n_layers = len(ws)

        # tangent-forward: directional derivatives of pre- and post-activations
        r_zs = [None] * n_layers
        r_acts = [np.zeros_like(acts[0])]
        for layer in range(n_layers):
            r_z = r_acts[layer] @ ws[layer] + acts[layer] @ vs[layer] + cs[layer]
            r_zs[layer] = r_z
            if layer < n_layers - 1:
                r_acts.append(self._act_deriv(acts[layer + 1]) * r_z)

        # tangent of the softmax cross-entropy adjoint
        inner = (probs * r_zs[-1]).sum(axis=1, keepdims=True)
        r_delta = probs * (r_zs[-1] - inner) / batch_size

        r_dws = [None] * n_layers
        r_dbs = [None] * n_layers
        for layer in range(n_layers - 1, -1, -1):
            r_dws[layer] = r_acts[layer].T @ deltas[layer] + acts[layer].T @ r_delta
            r_dbs[layer] = r_delta.sum(axis=0)
            if layer > 0:
                r_da = r_delta @ ws[layer].T + deltas[layer] @ vs[layer].T
                a = acts[layer]
                r_delta = r_da * self._act_deriv(a)
                if self.spec.activation == "tanh":
                    # second derivative term, zero for relu
                    r_delta += d_acts[layer] * (-2.0 * a * (1.0 - a * a)) * r_zs[layer - 1]
        return self._flatten(r_dws, r_dbs)

    def _grad_with_intermediates(self, w: np.ndarray, batch: Batch):
        ws, _ = self._unpack(w)
        acts = self._forward(w, batch.inputs)
        probs = self._softmax(acts[-1])
        g_out = probs.copy()
        g_out[np.arange(batch.size), batch.labels] -= 1.0
        g_out /= batch.size
        dws, dbs, deltas, d_acts = self._backward(ws, acts, g_out)
        return ws, acts, probs, deltas, d_acts, self._flatten(dws, dbs)

    def hvp(self, w, batch=None, v=None):
        w = self._check_dim(w)
        batch = self._check_batch(batch)
        v = self._check_dim(v)
        with np.errstate(over="ignore", invalid="ignore"):
            ws, acts, probs, deltas, d_acts, _ = self._grad_with_intermediates(w, batch)
            return self._tangent(ws, acts, probs, deltas, d_acts, v, batch.size)

    def grad_and_norm_grad(self, w, batch=None, c=1e-12):
        w = self._check_dim(w)
        batch = self._check_batch(batch)
        with np.errstate(over="ignore", invalid="ignore"):
            ws, acts, probs, deltas, d_acts, g = self._grad_with_intermediates(w, batch)
            denom = float(np.linalg.norm(g)) + c
            if denom == 0.0:
                return g, np.zeros_like(g)
            s = self._tangent(ws, acts, probs, deltas, d_acts, g / denom, batch.size)
            return g, s
