"""Piecewise-constant deterministic volatility ``g(t)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class VolatilityFn:
    """Right-continuous step function ``t -> g(t)`` in R^d.

    Piece ``i`` covers ``[breakpoints[i], breakpoints[i+1])``; the last piece
    extends to infinity. ``breakpoints[0]`` must be 0.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.atleast_1d(np.asarray(self.breakpoints, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            # one scalar per piece (d = 1)
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != len(bp):
            raise DomainError("values must have one d-vector per breakpoint")
        if bp[0] != 0.0:
            raise DomainError("breakpoints must start at 0")
        if np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise DomainError("volatility values must be finite")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value) -> "VolatilityFn":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.array([0.0]), v[None, :])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def is_constant(self, value=None) -> bool:
        if np.any(self.values != self.values[0]):
            return False
        return value is None or bool(np.all(self.values[0] == np.asarray(value, dtype=float)))

    def _piece(self, t):
        return np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, None)

    def __call__(self, t):
        """``g(t)``: shape (d,) for scalar t, (n, d) for an array of times."""
        t_arr = np.asarray(t, dtype=float)
        return self.values[self._piece(t_arr)]

    def integrate(self, a: float, b: float) -> np.ndarray:
        """Exact ``int_a^b g(s) ds``."""
        edges = np.concatenate([self.breakpoints[1:], [np.inf]])
        lo = np.clip(self.breakpoints, a, b)
        hi = np.clip(edges, a, b)
        return ((hi - lo)[:, None] * self.values).sum(axis=0)

    def integrate_quadratic(self, Q, a: float, b: float) -> float:
        """Exact ``int_a^b <Q g(s), g(s)> ds``."""
        edges = np.concatenate([self.breakpoints[1:], [np.inf]])
        lo = np.clip(self.breakpoints, a, b)
        hi = np.clip(edges, a, b)
        q = np.einsum("ki,ij,kj->k", self.values, np.asarray(Q, dtype=float), self.values)
        return float(((hi - lo) * q).sum())

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}
