"""Flow of the scalar equation ``dY = J(g Y) dt + Y(t-) <g, dL>``, ``Y(0, x) = x``.

Gaussian, alpha-subordinator and Poisson regimes are evaluated in closed
form; general jump martingales are integrated numerically between jumps
with classical RK4 and updated multiplicatively at each jump.

Every evaluator works on a batch: ``x0_rows`` has one row per output time,
so row ``k`` holds the initial values whose flow is wanted at ``times[k]``.
Surfaces need exactly this shape, since the initial value
``int_t^{t+x} r0`` depends on ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ETH, DomainError
from .exponent import exponent_along, flow_offset
from .noise import (
    AlphaSubordinator,
    JumpMartingale,
    LevyPath,
    Poisson,
    alpha_jump_factors,
    gaussian_log_inverse,
    is_gaussian,
    jump_factors,
    regime_name,
    stochastic_exponential_jump,
)
from .volatility import VolatilityFn

DEFAULT_SUBSTEPS = 8


@dataclass(frozen=True, eq=False)
class FlowPath:
    """``Y(t, x0)`` on a time grid. Entries at or after ``tau`` are blown up."""

    x0: float
    grid: np.ndarray
    values: np.ndarray
    tau: float
    blown_up: np.ndarray
    regime: str
    dvalues: np.ndarray | None = None
    substeps: int | None = None

    def __post_init__(self):
        for name in ("grid", "values", "blown_up", "dvalues"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=bool if name == "blown_up" else float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    def value(self, i: int):
        """``Y`` at grid index ``i``, or :data:`ETH` past the blow-up time."""
        return ETH if self.blown_up[i] else float(self.values[i])

    def derivative(self, i: int):
        if self.dvalues is None:
            raise DomainError("derivative not computed; use flow_derivative")
        return ETH if self.blown_up[i] else float(self.dvalues[i])


def _times(path: LevyPath, times) -> np.ndarray:
    t = path.grid if times is None else np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(t) < 0) or t[0] < 0 or t[-1] > path.horizon * (1 + 1e-12):
        raise DomainError("times must be sorted and lie in [0, horizon]")
    return t


def _expm1_over(z):
    """``expm1(z) / z`` with the removable singularity filled."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-8
    out[big] = np.expm1(z[big]) / z[big]
    small = ~big
    out[small] = 1.0 + 0.5 * z[small]
    return out


# ---------------------------------------------------------------------------
# Gaussian


class GaussianKernel:
    """``M_g^{-1}`` and ``I(t) = int_0^t M_g^{-1}(s) <Q g(s), g(s)> ds`` for one path.

    Between grid points W is linear and g is taken at the left end, so
    ``log M_g^{-1}`` is linear on each cell and ``I`` is integrated exactly.
    """

    def __init__(self, path: LevyPath, g: VolatilityFn):
        self.path = path
        self.grid = path.grid
        self.log_minv_grid, self.q = gaussian_log_inverse(path, g)
        dt = np.diff(self.grid)
        self.slope = np.diff(self.log_minv_grid) / dt
        cell = self.q * np.exp(self.log_minv_grid[:-1]) * dt * _expm1_over(self.slope * dt)
        self.I_grid = np.concatenate([[0.0], np.cumsum(cell)])

    def _cell(self, t):
        return np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, len(self.grid) - 2)

    def log_minv(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        i = self._cell(t)
        return self.log_minv_grid[i] + self.slope[i] * (t - self.grid[i])

    def integral(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        i = self._cell(t)
        h = t - self.grid[i]
        return self.I_grid[i] + self.q[i] * np.exp(self.log_minv_grid[i]) * h * _expm1_over(self.slope[i] * h)

    def first_passage(self, level: float) -> float:
        """Smallest ``t`` with ``I(t) = level`` (``inf`` if not reached by the horizon)."""
        if level <= 0:
            return 0.0
        i = int(np.searchsorted(self.I_grid, level, side="left"))
        if i >= len(self.I_grid):
            return math.inf
        i -= 1
        rem = level - self.I_grid[i]
        scale = self.q[i] * math.exp(self.log_minv_grid[i])
        b = self.slope[i]
        z = b * rem / scale
        h = rem / scale if abs(z) < 1e-14 else math.log1p(z) / b
        return float(min(self.grid[i] + h, self.grid[i + 1]))

    def evaluate(self, times, x0_rows):
        """``(Y, dY/dx0, blown)`` for ``Y = x0 M^{-1} / (1 - x0 I / 2)``."""
        minv = np.exp(self.log_minv(times))[:, None]
        D = 0.5 * self.integral(times)[:, None]
        denom = 1.0 - x0_rows * D
        blown = denom <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            Y = np.where(blown, np.nan, x0_rows * minv / denom)
            dY = np.where(blown, np.nan, minv / denom**2)
        return Y, dY, blown


def gaussian_flow(x0: float, g: VolatilityFn, path: LevyPath, times=None) -> FlowPath:
    """Closed-form Bernoulli flow ``Y = (1/x0 - I(t)/2)^{-1} M_g^{-1}(t)`` with its blow-up time."""
    if not path.is_gaussian:
        raise DomainError("gaussian_flow needs a Gaussian path")
    if not x0 > 0:
        raise DomainError("x0 must be > 0")
    t = _times(path, times)
    kern = GaussianKernel(path, g)
    tau = kern.first_passage(2.0 / x0)
    Y, _, blown = kern.evaluate(t, np.full((len(t), 1), float(x0)))
    blown = blown[:, 0] | (t >= tau)
    vals = np.where(blown, np.nan, Y[:, 0])
    return FlowPath(float(x0), t, vals, tau, blown, regime_name(path.spec))


# ---------------------------------------------------------------------------
# alpha-subordinator


class AlphaKernel:
    """Piecewise-constant ``M(t) = prod (1 + eta_i)^(1 - alpha)`` and ``int_0^t M^{-1}``."""

    def __init__(self, path: LevyPath, alpha: float):
        if not isinstance(path.spec, AlphaSubordinator):
            raise DomainError("needs an alpha-subordinator path")
        if not (0 < alpha < 1):
            raise DomainError("alpha must lie in (0, 1)")
        self.alpha = alpha
        self.jt = path.jump_times
        self.logM_seg = np.concatenate(
            [[0.0], np.cumsum(np.log(alpha_jump_factors(path.jump_marks, alpha)))]
        )
        starts = np.concatenate([[0.0], self.jt])
        seg_len = np.diff(np.concatenate([starts, [math.inf]]))[:-1]
        self.starts = starts
        self.int_at_start = np.concatenate(
            [[0.0], np.cumsum(seg_len * np.exp(-self.logM_seg[:-1]))]
        )

    def log_m(self, t) -> np.ndarray:
        return self.logM_seg[np.searchsorted(self.jt, t, side="right")]

    def int_minv(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.jt, t, side="right")
        return self.int_at_start[k] + (t - self.starts[k]) * np.exp(-self.logM_seg[k])

    def evaluate(self, times, x0_rows, branch: str = "threshold"):
        a = self.alpha
        p = 1.0 / (1.0 - a)
        t = np.asarray(times, dtype=float)
        Mp = np.exp(p * self.log_m(t))[:, None]
        c = x0_rows ** (1.0 - a) - (1.0 - a) * self.int_minv(t)[:, None]
        if branch == "threshold":
            cp = np.maximum(c, 0.0)
            Y = cp**p * Mp
            with np.errstate(divide="ignore", invalid="ignore"):
                dY = np.where(c > 0, cp ** (a * p) * x0_rows ** (-a) * Mp, 0.0)
        elif branch == "abs":
            Y = np.abs(c) ** p * Mp
            with np.errstate(divide="ignore", invalid="ignore"):
                dY = np.where(c != 0, np.sign(c) * np.abs(c) ** (a * p) * x0_rows ** (-a) * Mp, 0.0)
        else:
            raise DomainError("branch must be 'threshold' or 'abs'")
        dY = np.where((t == 0)[:, None], 1.0, dY)
        return Y, dY, np.zeros(Y.shape, dtype=bool)


def alpha_flow(x0: float, alpha: float, path: LevyPath, times=None, branch: str = "threshold") -> FlowPath:
    """Explicit alpha-case flow ``Y = max(c, 0)^{1/(1-alpha)} M^{1/(1-alpha)}``.

    ``c(t) = x0^{1-alpha} - (1-alpha) int_0^t M^{-1}``. Zero is absorbing.
    ``branch="abs"`` gives the alternative solution ``|c|^{1/(1-alpha)} M^{1/(1-alpha)}``.
    """
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    t = _times(path, times)
    Y, _, blown = AlphaKernel(path, alpha).evaluate(t, np.full((len(t), 1), float(x0)), branch)
    return FlowPath(float(x0), t, Y[:, 0], math.inf, blown[:, 0], "alpha_subordinator")


# ---------------------------------------------------------------------------
# Poisson


class PoissonKernel:
    """Event-driven exact flow for ``dY = lambda e^{-Y} dt + Y(t-) dN``.

    Between jumps ``e^Y`` grows linearly at rate ``lambda``; a unit jump
    doubles ``Y`` (so ``e^Y`` is squared). Computed in log space.
    """

    def __init__(self, path: LevyPath):
        if not isinstance(path.spec, Poisson):
            raise DomainError("needs a Poisson path")
        self.lam = path.spec.intensity
        self.jt = path.jump_times
        self.factors = 1.0 + path.jump_marks[:, 0]

    def _advance(self, Y, dY, dt):
        s = 1.0 + self.lam * dt * np.exp(-Y)
        return Y + np.log(s), dY / s

    def evaluate(self, times, x0_rows):
        t = np.asarray(times, dtype=float)
        Y = np.array(x0_rows, dtype=float, copy=True)
        dY = np.ones_like(Y)
        outY = np.empty_like(Y)
        outD = np.empty_like(Y)
        now = 0.0
        k0 = 0
        for tau, f in zip(list(self.jt) + [math.inf], list(self.factors) + [1.0]):
            k1 = int(np.searchsorted(t, tau, side="left"))
            if k1 > k0:
                # rows whose time precedes the next jump
                yk, dk = self._advance(Y[k0:k1], dY[k0:k1], (t[k0:k1] - now)[:, None])
                outY[k0:k1], outD[k0:k1] = yk, dk
                k0 = k1
            if k0 >= len(t) or not math.isfinite(tau):
                break
            Y[k0:], dY[k0:] = self._advance(Y[k0:], dY[k0:], tau - now)
            Y[k0:] *= f
            dY[k0:] *= f
            now = tau
        return outY, outD, np.zeros(Y.shape, dtype=bool)


def poisson_flow(x0: float, path: LevyPath, times=None) -> FlowPath:
    """Exact Poisson flow (unit volatility): ``Y = log Z`` with ``Z`` linear between jumps, squared at jumps."""
    if not isinstance(path.spec, Poisson):
        raise DomainError("poisson_flow needs a Poisson path")
    t = _times(path, times)
    Y, _, blown = PoissonKernel(path).evaluate(t, np.full((len(t), 1), float(x0)))
    return FlowPath(float(x0), t, Y[:, 0], math.inf, blown[:, 0], "poisson")


# ---------------------------------------------------------------------------
# General jump martingale


def _rk4_integrate(spec, g: VolatilityFn, path: LevyPath, times, x0_rows, substeps: int):
    """Integrate ``(Y, q)`` with ``q' = d/dy J(gY)`` on the event grid; returns rows at ``times``.

    Entries whose state turns non-finite have exploded in finite time (e.g.
    negative jump atoms make ``J`` grow exponentially); they are frozen at
    ``nan`` and flagged in the returned mask.
    """
    if substeps < 1:
        raise DomainError("substeps must be >= 1")
    t = np.asarray(times, dtype=float)
    factors = jump_factors(path, g)
    drift = path.drift_rate
    offset = flow_offset(spec)
    events = np.union1d(np.union1d(t, path.event_times()), g.breakpoints[g.breakpoints < path.horizon])
    events = events[events <= t[-1]]
    jump_at = {float(tau): f for tau, f in zip(path.jump_times, factors)}

    Y = np.array(x0_rows, dtype=float, copy=True)
    q = np.zeros_like(Y)
    outY = np.empty_like(Y)
    outQ = np.empty_like(Y)
    outB = np.zeros(Y.shape, dtype=bool)
    dead = np.zeros(Y.shape, dtype=bool)

    def rhs(gv, a, y):
        J, dJ = exponent_along(spec, gv, y)
        return J + offset + a * y, dJ

    k0 = 0
    # rows requested at t = 0
    while k0 < len(t) and t[k0] == 0.0:
        outY[k0], outQ[k0] = Y[k0], q[k0]
        k0 += 1
    for a_t, b_t in zip(events[:-1], events[1:]):
        if k0 >= len(t):
            break
        gv = g(a_t)
        a = float(gv @ drift)
        h = (b_t - a_t) / substeps
        y, qq = Y[k0:], q[k0:]
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(substeps):
                k1y, k1q = rhs(gv, a, y)
                k2y, k2q = rhs(gv, a, y + 0.5 * h * k1y)
                k3y, k3q = rhs(gv, a, y + 0.5 * h * k2y)
                k4y, k4q = rhs(gv, a, y + h * k3y)
                y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
                qq = qq + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        dead[k0:] |= ~(np.isfinite(y) & np.isfinite(qq))
        y = np.where(dead[k0:], np.nan, y)
        qq = np.where(dead[k0:], np.nan, qq)
        f = jump_at.get(float(b_t))
        if f is not None:
            y = y * f
        Y[k0:], q[k0:] = y, qq
        while k0 < len(t) and t[k0] == b_t:
            outY[k0], outQ[k0], outB[k0] = Y[k0], q[k0], dead[k0]
            k0 += 1
    return outY, outQ, outB


def _check_jump_spec(spec, path):
    if not isinstance(spec, (JumpMartingale, Poisson)):
        raise DomainError("jump_martingale_flow needs a JumpMartingale or Poisson spec")
    if not isinstance(path.spec, (JumpMartingale, Poisson)):
        raise DomainError("path is not a jump path")


def jump_martingale_flow(
    x0: float,
    g: VolatilityFn,
    spec,
    path: LevyPath,
    substeps: int = DEFAULT_SUBSTEPS,
    times=None,
) -> FlowPath:
    """Numerical flow: RK4 on ``dY/dt = J(gY) + Y <g, drift_rate>`` between jumps, ``Y *= 1 + <g, eta>`` at jumps."""
    _check_jump_spec(spec, path)
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    t = _times(path, times)
    Y, _, blown = _rk4_integrate(spec, g, path, t, np.full((len(t), 1), float(x0)), substeps)
    blown = np.maximum.accumulate(blown[:, 0])
    tau = float(t[np.argmax(blown)]) if blown.any() else math.inf
    return FlowPath(float(x0), t, Y[:, 0], tau, blown, regime_name(spec), substeps=substeps)


def jump_flow_rows(spec, g: VolatilityFn, path: LevyPath, times, x0_rows, substeps: int = DEFAULT_SUBSTEPS):
    """Batch numerical flow with derivative ``exp(int <g, grad J(gY)>) A(t)``."""
    _check_jump_spec(spec, path)
    t = np.asarray(times, dtype=float)
    Y, q, blown = _rk4_integrate(spec, g, path, t, x0_rows, substeps)
    A = stochastic_exponential_jump(path, g, t).values
    with np.errstate(over="ignore"):
        dY = np.exp(q) * A[:, None]
    blown = np.maximum.accumulate(blown | ~np.isfinite(dY), axis=0)
    return np.where(blown, np.nan, Y), np.where(blown, np.nan, dY), blown


# ---------------------------------------------------------------------------
# Dispatch and derivative


def uses_exact_poisson(spec, g: VolatilityFn) -> bool:
    return isinstance(spec, Poisson) and g.is_constant(1.0)


def flow_rows(spec, g: VolatilityFn, path: LevyPath, times, x0_rows, substeps: int = DEFAULT_SUBSTEPS):
    """``(Y, dY/dx0, blown)`` for every regime, rows aligned with ``times``."""
    x0_rows = np.asarray(x0_rows, dtype=float)
    if is_gaussian(spec):
        return GaussianKernel(path, g).evaluate(times, x0_rows)
    if isinstance(spec, AlphaSubordinator):
        if not g.is_constant(1.0):
            raise DomainError("the alpha-subordinator regime supports g == 1 only")
        return AlphaKernel(path, spec.alpha).evaluate(times, x0_rows)
    if uses_exact_poisson(spec, g):
        return PoissonKernel(path).evaluate(times, x0_rows)
    return jump_flow_rows(spec, g, path, times, x0_rows, substeps)


def solve_flow(x0: float, g: VolatilityFn, spec, path: LevyPath, times=None,
               substeps: int = DEFAULT_SUBSTEPS) -> FlowPath:
    """Pick the flow solver appropriate for ``spec`` and ``g``."""
    if is_gaussian(spec):
        return gaussian_flow(x0, g, path, times)
    if isinstance(spec, AlphaSubordinator):
        if not g.is_constant(1.0):
            raise DomainError("the alpha-subordinator regime supports g == 1 only")
        return alpha_flow(x0, spec.alpha, path, times)
    if uses_exact_poisson(spec, g):
        return poisson_flow(x0, path, times)
    return jump_martingale_flow(x0, g, spec, path, substeps, times)


def flow_derivative(flow: FlowPath, g: VolatilityFn, spec, path: LevyPath) -> FlowPath:
    """Return ``flow`` with ``dvalues = dY/dx`` filled in.

    Jump regimes use ``exp(int_0^t <g, grad J(g Y)> ds) A(t)``; the Gaussian,
    alpha and exact Poisson regimes differentiate their closed forms.
    Entries past the blow-up time stay blown up.
    """
    t = flow.grid
    rows = np.full((len(t), 1), flow.x0)
    if is_gaussian(spec):
        _, dY, _ = GaussianKernel(path, g).evaluate(t, rows)
    elif isinstance(spec, AlphaSubordinator) or uses_exact_poisson(spec, g):
        _, dY, _ = flow_rows(spec, g, path, t, rows)
    else:
        _, dY, _ = jump_flow_rows(spec, g, path, t, rows, flow.substeps or DEFAULT_SUBSTEPS)
    d = np.where(flow.blown_up, np.nan, dY[:, 0])
    return replace(flow, dvalues=d)


