"""Uniform space-time grids shared by every module."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Box ``[-L, L]^d`` sampled with ``n_x`` nodes per axis (endpoints included)
    and ``[0, T]`` split into ``K`` uniform steps.
    """

    L: float
    n_x: int
    K: int
    T: float
    d: int = 1

    def __post_init__(self):
        if self.L <= 0 or self.T <= 0:
            raise ValueError("L and T must be positive")
        if self.n_x < 3 or self.K < 1:
            raise ValueError("need n_x >= 3 and K >= 1")
        if self.d not in (1, 2):
            raise ValueError("only d = 1 or d = 2 is supported")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.n_x - 1)

    @property
    def dt(self) -> float:
        return self.T / self.K

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n_x)

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.d

    @cached_property
    def points(self) -> np.ndarray:
        """Grid nodes as an ``(N, d)`` array in C order of :attr:`shape`."""
        axes = np.meshgrid(*([self.x] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    def quadrature_weights(self) -> np.ndarray:
        """Composite trapezoid weights on the grid nodes, shape :attr:`shape`."""
        w1 = np.full(self.n_x, self.dx)
        w1[0] = w1[-1] = 0.5 * self.dx
        if self.d == 1:
            return w1
        return np.outer(w1, w1)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid integral over the box of values shaped ``(..., *shape)``."""
        w = self.quadrature_weights()
        axes = tuple(range(-self.d, 0))
        return np.sum(values * w, axis=axes)

    def snapshot_indices(self, count: int) -> np.ndarray:
        """``count + 1`` evenly spaced step indices from 0 to K inclusive."""
        count = max(1, min(count, self.K))
        return np.unique(np.round(np.linspace(0, self.K, count + 1)).astype(int))

    def with_(self, **changes) -> SpaceTimeGrid:
        fields = dict(L=self.L, n_x=self.n_x, K=self.K, T=self.T, d=self.d)
        fields.update(changes)
        return SpaceTimeGrid(**fields)


def check_same_grid(a: SpaceTimeGrid, b: SpaceTimeGrid, what: str = "grids") -> None:
    if a != b:
        raise GridMismatch(f"{what} differ: {a} vs {b}")
