"""Initial curves, forward-rate surfaces, bond prices and blow-up boundaries.

The surface is assembled from the flow: with ``R(t, x) = int_t^{t+x} r0``,

    u(t, x) = Y(t, R(t, x)) - Y(t, 0)
    r(t, x) = dY/dx0 (t, R(t, x)) * r0(t + x)

evaluated against one shared noise path for every maturity. ``Y(t, 0)``
vanishes in all regimes except Poisson, where it keeps ``u(t, 0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ETH, BlowupError, DomainError
from .flow import DEFAULT_SUBSTEPS, GaussianKernel, flow_rows
from .noise import LevyPath, SeedRecord, is_gaussian, regime_name
from .volatility import VolatilityFn


@dataclass(frozen=True, eq=False)
class InitialCurve:
    """Piecewise-linear ``r0`` through ``(knots, values)``, constant after the last knot."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.knots, dtype=float))
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if k.shape != v.shape or len(k) == 0:
            raise DomainError("knots and values must have the same nonzero length")
        if k[0] != 0.0 or np.any(np.diff(k) <= 0):
            raise DomainError("knots must start at 0 and increase strictly")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("initial curve values must be finite and >= 0")
        slopes = np.diff(v) / np.diff(k) if len(k) > 1 else np.empty(0)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(k))])
        for name, arr in (("knots", k), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_slopes", np.concatenate([slopes, [0.0]]))
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def constant(cls, level: float) -> "InitialCurve":
        return cls([0.0], [level])

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("curve arguments must be >= 0")
        i = np.searchsorted(self.knots, x, side="right") - 1
        return x, i, x - self.knots[i]

    def __call__(self, x):
        x, i, h = self._locate(x)
        return self.values[i] + self._slopes[i] * h

    def primitive(self, x):
        """``int_0^x r0``, exact."""
        x, i, h = self._locate(x)
        return self._cum[i] + self.values[i] * h + 0.5 * self._slopes[i] * h * h

    def antiderivative(self, a, b):
        """``int_a^b r0``, exact for the piecewise-linear curve."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a > b):
            raise DomainError("antiderivative needs a <= b")
        out = self.primitive(b) - self.primitive(a)
        return float(out) if out.ndim == 0 else out

    @property
    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class PrimitiveSurface:
    """``u(t, x) = int_0^x r(t, y) dy`` on a grid; ``nan`` where blown up."""

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    blown_up: np.ndarray

    def value(self, i: int, j: int):
        return ETH if self.blown_up[i, j] else float(self.values[i, j])


@dataclass(frozen=True, eq=False)
class ForwardSurface:
    """``r(t, x)`` on a grid with its blow-up mask and boundary ``tau(x, r0)``."""

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    blown_up: np.ndarray
    tau_curve: np.ndarray
    regime: str
    u_values: np.ndarray
    curve: InitialCurve
    seed_record: SeedRecord | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t_grid", "x_grid", "values", "blown_up", "tau_curve", "u_values"):
            arr = np.array(getattr(self, name), dtype=bool if name == "blown_up" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def value(self, i: int, j: int):
        """``r`` at node ``(t_i, x_j)`` or :data:`ETH`."""
        return ETH if self.blown_up[i, j] else float(self.values[i, j])

    def primitive(self) -> PrimitiveSurface:
        return PrimitiveSurface(self.t_grid, self.x_grid, self.u_values, self.blown_up)

    def biased(self, delta: float) -> "ForwardSurface":
        """Copy with ``delta`` added to every finite value (negative controls)."""
        return ForwardSurface(
            self.t_grid, self.x_grid, self.values + delta, self.blown_up, self.tau_curve,
            self.regime, self.u_values, self.curve, self.seed_record, dict(self.metadata),
        )


def x_grid_for(x_max: float, x_step: float) -> np.ndarray:
    if not (x_max > 0 and x_step > 0):
        raise DomainError("x_max and x_step must be > 0")
    n = max(1, int(math.ceil(x_max / x_step - 1e-9)))
    xs = np.arange(n + 1, dtype=float) * x_step
    xs[-1] = x_max
    return xs


def _grids(path: LevyPath, x_grid, t_grid):
    t = path.grid if t_grid is None else np.asarray(t_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise DomainError("x_grid must start at 0 and increase strictly")
    if np.any(np.diff(t) <= 0) or t[0] != 0.0 or t[-1] > path.horizon * (1 + 1e-12):
        raise DomainError("t_grid must start at 0, increase, and end by the horizon")
    return t, x


def _surface_arrays(curve, g, spec, path, t, x, substeps):
    T, X = t[:, None], x[None, :]
    R = curve.antiderivative(np.broadcast_to(T, (len(t), len(x))), T + X)
    rows = np.concatenate([np.zeros((len(t), 1)), R], axis=1)
    Y, dY, blown = flow_rows(spec, g, path, t, rows, substeps)
    u = Y[:, 1:] - Y[:, :1]
    r = dY[:, 1:] * curve(T + X)
    return r, u, blown[:, 1:] | blown[:, :1]


def primitive_surface(curve: InitialCurve, g: VolatilityFn, spec, path: LevyPath, x_grid,
                      t_grid=None, substeps: int = DEFAULT_SUBSTEPS) -> PrimitiveSurface:
    """``u(t, x) = Y(t, int_t^{t+x} r0) - Y(t, 0)`` for one shared path."""
    return forward_surface(curve, g, spec, path, x_grid, t_grid, substeps).primitive()


def forward_surface(curve: InitialCurve, g: VolatilityFn, spec, path: LevyPath, x_grid,
                    t_grid=None, substeps: int = DEFAULT_SUBSTEPS) -> ForwardSurface:
    """Forward-rate surface ``r(t, x)`` and primitive for one noise path.

    Gaussian regime: requires a strictly positive curve; nodes with
    ``t >= tau(x, r0)`` are blown up. The alpha and Poisson regimes are
    global in time; general jump martingales may explode when ``nu`` charges
    negative marks, detected on the t grid.
    """
    t, x = _grids(path, x_grid, t_grid)
    if type(path.spec) is not type(spec):
        raise DomainError("path was simulated for a different noise regime")
    if is_gaussian(spec):
        if not curve.is_strictly_positive:
            raise DomainError("the Gaussian closed form needs a strictly positive r0")
        tau = blowup_boundary(curve, g, path, x)
    else:
        tau = np.full(len(x), math.inf)
    r, u, blown = _surface_arrays(curve, g, spec, path, t, x, substeps)
    blown = np.maximum.accumulate(blown | (t[:, None] >= tau[None, :]), axis=0)
    if not is_gaussian(spec):
        # numerical explosion of the jump flow, resolved to the t grid
        tau = np.where(blown.any(axis=0), t[np.argmax(blown, axis=0)], math.inf)
    r = np.where(blown, np.nan, r)
    u = np.where(blown, np.nan, u)
    meta = {
        "regime": regime_name(spec),
        "seed": None if path.seed_record is None else path.seed_record.to_dict(),
        "t_grid": {"start": float(t[0]), "stop": float(t[-1]), "n": len(t)},
        "x_grid": {"start": float(x[0]), "stop": float(x[-1]), "n": len(x)},
        "curve": curve.to_dict(),
        "g": g.to_dict(),
    }
    return ForwardSurface(t, x, r, blown, tau, regime_name(spec), u, curve, path.seed_record, meta)


def blowup_boundary(curve: InitialCurve, g: VolatilityFn, path: LevyPath, x_grid,
                    xtol: float = 1e-12) -> np.ndarray:
    """Gaussian ``tau(x, r0)``: first ``t`` with ``int_t^{t+x} r0 = 2 / I(t)``.

    Scans the path grid for the first node where ``I(t) R(t, x) / 2 >= 1``
    and refines the crossing inside that cell with a bracketing root finder.
    ``+inf`` when there is no crossing by the horizon; always ``+inf`` at x = 0.
    """
    if not path.is_gaussian:
        raise DomainError("blow-up boundary is defined for the Gaussian regime")
    kern = GaussianKernel(path, g)
    tg = path.grid
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    D = 0.5 * kern.I_grid[:, None]
    R = curve.antiderivative(np.broadcast_to(tg[:, None], (len(tg), len(x))), tg[:, None] + x[None, :])
    hit = D * R >= 1.0
    tau = np.full(len(x), math.inf)
    for j in np.flatnonzero(hit.any(axis=0)):
        if x[j] == 0.0:
            continue
        k = int(np.argmax(hit[:, j]))
        xj = float(x[j])

        def gap(s, xj=xj):
            return 0.5 * float(kern.integral(s)) * curve.antiderivative(s, s + xj) - 1.0

        lo, hi = float(tg[k - 1]), float(tg[k])
        tau[j] = hi if gap(hi) == 0.0 else brentq(gap, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return tau


def _row(surface, t: float) -> int:
    i = int(np.argmin(np.abs(surface.t_grid - t)))
    if not math.isclose(surface.t_grid[i], t, rel_tol=1e-12, abs_tol=1e-12):
        raise DomainError(f"t = {t} is not a node of the surface time grid")
    return i


def _bracket(xg: np.ndarray, x: float):
    if x < 0 or x > xg[-1] * (1 + 1e-12):
        raise DomainError(f"x = {x} outside the surface grid [0, {xg[-1]}]")
    j = int(np.clip(np.searchsorted(xg, x, side="right") - 1, 0, len(xg) - 2))
    w = min(max((x - xg[j]) / (xg[j + 1] - xg[j]), 0.0), 1.0)
    return j, w


def bond_price(surface, t: float, x: float) -> float:
    """``P(t, x) = exp(-u(t, x))`` from the primitive, linear in x between nodes."""
    prim = surface.primitive() if isinstance(surface, ForwardSurface) else surface
    i = _row(prim, t)
    if x == 0:
        return 1.0
    j, w = _bracket(prim.x_grid, x)
    upper = j + 1 if w > 0 else j
    if np.any(prim.blown_up[i, : upper + 1]):
        raise BlowupError(f"the forward curve at t = {t} does not exist on [0, {x}]")
    u = (1 - w) * prim.values[i, j] + w * prim.values[i, j + 1] if w > 0 else prim.values[i, j]
    return math.exp(-u)


def to_original(surface: ForwardSurface, t: float, S: float):
    """``f(t, S) = r(t, S - t)``, linear in x between nodes; :data:`ETH` if blown up."""
    if S < t:
        raise DomainError("maturity S must be >= t")
    i = _row(surface, t)
    j, w = _bracket(surface.x_grid, S - t)
    nodes = [j] if w == 0 else [j, j + 1]
    if any(surface.blown_up[i, k] for k in nodes):
        return ETH
    if w == 0:
        return float(surface.values[i, j])
    return float((1 - w) * surface.values[i, j] + w * surface.values[i, j + 1])


def gaussian_original(curve: InitialCurve, g: VolatilityFn, path: LevyPath, t: float, S: float):
    """Gaussian ``f(t, S)`` evaluated directly in the original parametrization.

    ``f(0,S) [R^{-1} - I(t)/2]^{-2} R^{-2} M_g^{-1}(t)`` with ``R = int_t^S f(0, s) ds``.
    """
    if S < t:
        raise DomainError("maturity S must be >= t")
    x = S - t
    tau = blowup_boundary(curve, g, path, [x])[0]
    if t >= tau:
        return ETH
    kern = GaussianKernel(path, g)
    if x == 0:
        return float(curve(S) * np.exp(kern.log_minv(t)))
    R = curve.antiderivative(t, S)
    D = 0.5 * float(kern.integral(t))
    return float(curve(S) * (1.0 / R - D) ** -2 * R**-2 * np.exp(kern.log_minv(t)))
