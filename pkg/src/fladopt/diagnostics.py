"""Curvature diagnostics over any loss oracle.

Estimates the quantities behind the flatness claims: top Hessian
eigenpairs (power iteration with deflation over the HVP operator, never
forming the Hessian), the trace (Hutchinson with Rademacher probes), the
alignment of gradient noise with curvature Tr(H Sigma), and 1-D/2-D loss
slices around a parameter point. A dense-Hessian builder is included for
verification at small dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracles import Batch, LossOracle
from .params import ParamVector

__all__ = [
    "SpectrumReport",
    "LandscapeSlice",
    "top_eigenpairs",
    "hutchinson_trace",
    "tr_h_sigma",
    "landscape_slice",
    "dense_hessian",
    "random_direction",
    "spectrum_report",
]


@dataclass
class SpectrumReport:
    """Top-k curvature summary at one parameter point."""

    eigenvalues: list[float]  # descending
    eigenvectors: np.ndarray  # k x d, unit rows, pairwise orthogonal
    residuals: list[float]  # |H v - lambda v| per pair, after deflation
    converged: list[bool] | None = None
    trace_estimate: float | None = None
    trace_stderr: float | None = None
    hutchinson_samples: int = 0
    tr_h_sigma: float | None = None


@dataclass
class LandscapeSlice:
    """Loss values on a line or plane through the current parameters."""

    directions: np.ndarray  # (1 or 2) x d unit rows
    grid: np.ndarray  # offsets, must contain 0
    losses: np.ndarray  # (g,) for 1-D, (g, g) for 2-D
    scale: float
    center_loss: float


def _as_batches(batches) -> list:
    if batches is None:
        return [None]
    if isinstance(batches, Batch):
        return [batches]
    batches = list(batches)
    if not batches:
        raise ValueError("need at least one batch")
    return batches


def _mean_hvp(oracle: LossOracle, w: np.ndarray, batches: list, v: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(v)
    for batch in batches:
        hv = oracle.hvp(w, batch, v)
        if not np.all(np.isfinite(hv)):
            raise FloatingPointError("non-finite Hessian-vector product")
        acc += hv
    return acc / len(batches)


def top_eigenpairs(
    oracle: LossOracle,
    w: np.ndarray,
    batches,
    k: int = 5,
    iters: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> SpectrumReport:
    """Power iteration with deflation over the averaged-HVP operator.

    A pair converges when successive Rayleigh quotients move less than
    `tol` and its residual |Hv - lambda v| drops below tol*(|lambda|+1);
    otherwise iteration stops at `iters` and the report carries the
    achieved residual. Pairs come out in magnitude order and are reported
    sorted by eigenvalue, descending.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    batches = _as_batches(batches)
    w = np.asarray(w, dtype=np.float64)
    d = w.size
    rng = np.random.default_rng(seed)
    values: list[float] = []
    vectors: list[np.ndarray] = []
    residuals: list[float] = []
    flags: list[bool] = []

    def deflated(v: np.ndarray) -> np.ndarray:
        hv = _mean_hvp(oracle, w, batches, v)
        for lam, u in zip(values, vectors):
            hv = hv - lam * (u @ v) * u
        return hv

    for _ in range(min(k, d)):
        v = rng.normal(size=d)
        for u in vectors:
            v -= (u @ v) * u
        v /= np.linalg.norm(v)
        lam_prev = np.inf
        lam, res = 0.0, np.inf
        for _ in range(iters):
            hv = deflated(v)
            lam = float(v @ hv)
            res = float(np.linalg.norm(hv - lam * v))
            # iterate past the nominal residual bound so deflation error
            # stays below the next pair's requirement
            if abs(lam - lam_prev) < tol and res < 0.125 * tol * (abs(lam) + 1):
                break
            lam_prev = lam
            nrm = float(np.linalg.norm(hv))
            if nrm == 0.0:  # operator vanishes on the remaining subspace
                lam, res = 0.0, 0.0
                break
            v = hv / nrm
            for u in vectors:
                v -= (u @ v) * u
            v /= np.linalg.norm(v)
        values.append(lam)
        vectors.append(v)
        residuals.append(res)
        flags.append(res < tol * (abs(lam) + 1))

    order = np.argsort(values)[::-1]
    return SpectrumReport(
        eigenvalues=[values[i] for i in order],
        eigenvectors=np.stack([vectors[i] for i in order]),
        residuals=[residuals[i] for i in order],
        converged=[flags[i] for i in order],
    )


def hutchinson_trace(
    oracle: LossOracle,
    w: np.ndarray,
    batches,
    samples: int = 64,
    seed: int = 0,
) -> tuple[float, float]:
    """Trace estimate mean(z' H z) over Rademacher z; returns (estimate,
    standard error)."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    batches = _as_batches(batches)
    w = np.asarray(w, dtype=np.float64)
    rng = np.random.default_rng(seed)
    draws = np.empty(samples)
    for i in range(samples):
        z = rng.integers(0, 2, size=w.size).astype(np.float64) * 2.0 - 1.0
        draws[i] = z @ _mean_hvp(oracle, w, batches, z)
    stderr = float(np.std(draws, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return float(draws.mean()), stderr


def tr_h_sigma(
    oracle: LossOracle,
    w: np.ndarray,
    batches,
    k: int = 5,
    seed: int = 0,
    eigenpairs: SpectrumReport | None = None,
    gradient_fn=None,
) -> float:
    """Tr(H Sigma) restricted to the top-k eigenspace.

    With eigenpairs (lambda_j, v_j) of the pooled-batch Hessian, returns
    sum_j lambda_j * Var_b(<g_b, v_j>), the unbiased sample variance taken
    over per-batch gradients (or over `gradient_fn(w, batch)` outputs, e.g.
    applied update directions).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    batches = _as_batches(batches)
    if len(batches) < 2:
        raise ValueError("variance over batches needs at least 2 batches")
    w = np.asarray(w, dtype=np.float64)
    if eigenpairs is None:
        eigenpairs = top_eigenpairs(oracle, w, batches, k=k, seed=seed)
    take = min(k, len(eigenpairs.eigenvalues))
    if gradient_fn is None:
        gradient_fn = oracle.grad
    grads = np.stack([gradient_fn(w, batch) for batch in batches])
    total = 0.0
    for j in range(take):
        proj = grads @ eigenpairs.eigenvectors[j]
        total += eigenpairs.eigenvalues[j] * float(np.var(proj, ddof=1))
    return total


def landscape_slice(
    oracle: LossOracle,
    w: np.ndarray,
    directions: np.ndarray,
    grid: np.ndarray | None = None,
    scale: float = 1.0,
    batch: Batch | None = None,
) -> LandscapeSlice:
    """Loss on w + a*scale*d1 (+ b*scale*d2) over a grid of offsets.

    Directions must be unit vectors; the grid must contain 0 so the slice
    passes exactly through the current parameters. Non-finite losses are
    recorded as NaN rather than raised.
    """
    w = np.asarray(w, dtype=np.float64)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[0] not in (1, 2) or directions.shape[1] != w.size:
        raise ValueError("directions must be one or two vectors matching the parameters")
    for dvec in directions:
        if abs(np.linalg.norm(dvec) - 1.0) > 1e-6:
            raise ValueError("directions must be unit-normalized")
    grid = np.linspace(-1.0, 1.0, 41) if grid is None else np.asarray(grid, dtype=np.float64)
    if not np.any(grid == 0.0):
        raise ValueError("grid must contain 0 (the current parameters)")

    def safe_loss(point: np.ndarray) -> float:
        val = oracle.loss(point, batch)
        return val if np.isfinite(val) else float("nan")

    if directions.shape[0] == 1:
        losses = np.array([safe_loss(w + a * scale * directions[0]) for a in grid])
    else:
        losses = np.array(
            [
                [safe_loss(w + a * scale * directions[0] + b * scale * directions[1]) for b in grid]
                for a in grid
            ]
        )
    return LandscapeSlice(directions, grid, losses, float(scale), oracle.loss(w, batch))


def dense_hessian(oracle: LossOracle, w: np.ndarray, batches, max_dim: int = 512) -> np.ndarray:
    """Materialize the Hessian column by column from HVPs. Verification
    helper for small models only."""
    w = np.asarray(w, dtype=np.float64)
    if w.size > max_dim:
        raise ValueError(f"dense Hessian limited to {max_dim} parameters, got {w.size}")
    batches = _as_batches(batches)
    cols = []
    for j in range(w.size):
        e = np.zeros(w.size)
        e[j] = 1.0
        cols.append(_mean_hvp(oracle, w, batches, e))
    return np.stack(cols, axis=1)


def random_direction(
    params: ParamVector, rng: np.random.Generator, per_span: bool = True
) -> np.ndarray:
    """Random unit direction; with per_span, each layer span is first
    rescaled to the parameter span's norm (filter-style normalization)."""
    direction = rng.normal(size=len(params))
    if per_span:
        offsets = params.layout.offsets()
        for _, (start, stop) in offsets.items():
            seg = direction[start:stop]
            seg_norm = np.linalg.norm(seg)
            ref_norm = np.linalg.norm(params.values[start:stop])
            if seg_norm > 0 and ref_norm > 0:
                direction[start:stop] = seg * (ref_norm / seg_norm)
    nrm = np.linalg.norm(direction)
    if nrm == 0:
        raise ValueError("degenerate zero direction")
    return direction / nrm


def spectrum_report(
    oracle: LossOracle,
    w: np.ndarray,
    batches,
    k: int = 5,
    iters: int = 100,
    tol: float = 1e-6,
    hutchinson_samples: int = 64,
    seed: int = 0,
) -> SpectrumReport:
    """Eigenpairs, trace, and (given >= 2 batches) Tr(H Sigma) in one report."""
    batches = _as_batches(batches)
    report = top_eigenpairs(oracle, w, batches, k=k, iters=iters, tol=tol, seed=seed)
    trace, stderr = hutchinson_trace(oracle, w, batches, samples=hutchinson_samples, seed=seed)
    report.trace_estimate = trace
    report.trace_stderr = stderr
    report.hutchinson_samples = hutchinson_samples
    if len(batches) >= 2:
        report.tr_h_sigma = tr_h_sigma(oracle, w, batches, k=k, seed=seed, eigenpairs=report)
    return report
