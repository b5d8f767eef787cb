"""Flat parameter vectors with named layer spans.

All optimizer math runs over a single dense float64 vector; the layout maps
contiguous spans of that vector back to layer tensors (weight matrices,
bias rows) so models can be rebuilt, grown, and sliced per layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ParamLayout", "ParamVector"]


@dataclass(frozen=True)
class ParamLayout:
    """Ordered (name, shape) spans partitioning a flat vector."""

    spans: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        names = [name for name, _ in self.spans]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate span names in layout: {names}")

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.spans)

    def offsets(self) -> dict[str, tuple[int, int]]:
        """Map span name to its (start, stop) slice into the flat vector."""
        table = {}
        pos = 0
        for name, shape in self.spans:
            n = int(np.prod(shape))
            table[name] = (pos, pos + n)
            pos += n
        return table

    def shape_of(self, name: str) -> tuple[int, ...]:
        for span_name, shape in self.spans:
            if span_name == name:
                return shape
        raise KeyError(name)


@dataclass
class ParamVector:
    """Dense parameter vector plus the layout describing its spans."""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("parameter values must be a flat 1-D vector")
        if self.values.size != self.layout.size:
            raise ValueError(
                f"vector length {self.values.size} does not match layout size {self.layout.size}"
            )

    def __len__(self) -> int:
        return self.values.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=np.float64), self.layout)

    def view(self, name: str) -> np.ndarray:
        """Writable view of one span, reshaped to its tensor shape."""
        start, stop = self.layout.offsets()[name]
        return self.values[start:stop].reshape(self.layout.shape_of(name))

    def check_finite(self, label: str = "parameters") -> None:
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise FloatingPointError(f"{label} contain non-finite entry at index {bad}")
