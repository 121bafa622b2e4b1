"""Uniform tensor grids over boxes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_NODES = 5


class DegenerateGrid(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        shape = tuple(int(v) for v in np.atleast_1d(self.shape))
        if not (len(lo) == len(hi) == len(shape)):
            raise ValueError("box bounds and shape must have the same length")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def check(self) -> None:
        for k, (a, b, m) in enumerate(zip(self.lo, self.hi, self.shape)):
            if m < MIN_NODES:
                raise DegenerateGrid(f"axis {k + 1} has {m} nodes; at least {MIN_NODES} required")
            if not a < b:
                raise DegenerateGrid(f"axis {k + 1}: min {a} must be below max {b}")

    @property
    def spacing(self) -> tuple:
        return tuple((b - a) / (m - 1) for a, b, m in zip(self.lo, self.hi, self.shape))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, m) for a, b, m in zip(self.lo, self.hi, self.shape)]

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dim), row-major."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(grids, axis=-1)

    def nodes(self) -> np.ndarray:
        return self.mesh().reshape(-1, self.dim)

    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    def interior(self) -> tuple:
        return tuple(slice(1, m - 1) for m in self.shape)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.ones(self.shape)
        for k, (m, dh) in enumerate(zip(self.shape, self.spacing)):
            wk = np.full(m, dh)
            wk[0] = wk[-1] = 0.5 * dh
            shape = [1] * self.dim
            shape[k] = m
            w = w * wk.reshape(shape)
        return w
