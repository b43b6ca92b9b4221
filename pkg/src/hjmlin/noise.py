"""Driving Levy noises: specifications, seeded path simulation, stochastic exponentials.

Four regimes are supported:

* ``Gaussian`` / ``StandardWiener`` -- Wiener process with covariance ``Q``.
* ``AlphaSubordinator`` -- alpha-stable subordinator, small jumps below
  ``truncation_eps`` removed (not compensated).
* ``JumpMartingale`` -- compensated compound Poisson noise with a finite
  Levy measure ``nu``.
* ``Poisson`` -- Poisson process, optionally compensated.

Randomness is drawn from counter-derived substreams of one 64-bit master
seed, so path ``i`` of a Monte Carlo run does not depend on how many other
paths were generated before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gamma

from .errors import DomainError, PositivityError
from .volatility import VolatilityFn

# ---------------------------------------------------------------------------
# Levy measures


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite Levy measure ``sum_k w_k delta_{eta_k}`` on R^d."""

    marks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        marks = np.asarray(self.marks, dtype=float)
        if marks.ndim == 1:
            marks = marks[:, None]
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if marks.ndim != 2 or marks.shape[0] != weights.shape[0] or len(weights) == 0:
            raise DomainError("need one weight per mark")
        if np.any(weights <= 0) or not np.all(np.isfinite(marks)):
            raise DomainError("weights must be positive and marks finite")
        marks.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, mark=1.0, weight: float = 1.0) -> "AtomicMeasure":
        return cls(np.atleast_1d(np.asarray(mark, dtype=float))[None, :], [weight])

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def first_moment(self) -> np.ndarray:
        return self.weights @ self.marks

    def moment_condition(self) -> float:
        norms = np.linalg.norm(self.marks, axis=1)
        return float(self.weights @ np.maximum(norms, norms**2))

    def support_min(self) -> float:
        return float(self.marks.min())

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights / self.total_mass)
        return self.marks[idx]

    def to_dict(self) -> dict:
        return {"atoms": {"marks": self.marks.tolist(), "weights": self.weights.tolist()}}


@dataclass(frozen=True)
class PowerLawMeasure:
    """``scale * eta^(-1-alpha) d eta`` on ``[lower, upper]`` (d = 1)."""

    alpha: float
    scale: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (0 < self.lower < self.upper < math.inf):
            raise DomainError("need 0 < lower < upper < inf")
        if not (0 < self.alpha < 2) or self.scale <= 0:
            raise DomainError("need alpha in (0, 2) and scale > 0")

    dim = 1

    def density(self, eta):
        return self.scale * np.asarray(eta, dtype=float) ** (-1.0 - self.alpha)

    def _power_integral(self, p: float) -> float:
        # int_lower^upper eta^(p-1-alpha) d eta
        e = p - self.alpha
        if e == 0:
            return math.log(self.upper / self.lower)
        return (self.upper**e - self.lower**e) / e

    @property
    def total_mass(self) -> float:
        return self.scale * self._power_integral(0.0)

    @property
    def first_moment(self) -> np.ndarray:
        return np.array([self.scale * self._power_integral(1.0)])

    def moment_condition(self) -> float:
        return self.scale * (
            self._power_integral(1.0) + self._power_integral(2.0)
        )  # crude upper bound of int max(|eta|, eta^2)

    def support_min(self) -> float:
        return self.lower

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a, b = self.lower ** -self.alpha, self.upper ** -self.alpha
        u = rng.random(n)
        return ((a - u * (a - b)) ** (-1.0 / self.alpha))[:, None]

    def to_dict(self) -> dict:
        return {
            "power_law": {
                "alpha": self.alpha,
                "scale": self.scale,
                "lower": self.lower,
                "upper": self.upper,
            }
        }


LevyMeasure = Union[AtomicMeasure, PowerLawMeasure]

# ---------------------------------------------------------------------------
# Noise specifications


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Wiener process with covariance ``Q`` (symmetric positive semidefinite)."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise DomainError("Q must be square")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise DomainError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
            raise DomainError("Q must be positive semidefinite")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class StandardWiener:
    d: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.d

    @property
    def Q(self) -> np.ndarray:
        return np.eye(self.d)


@dataclass(frozen=True)
class AlphaSubordinator:
    """alpha-stable subordinator with Levy density ``c_alpha eta^(-1-alpha)``.

    ``c_alpha = alpha / Gamma(1 - alpha)`` makes ``E exp(-xi L(1)) = exp(-xi^alpha)``.
    Jumps smaller than ``truncation_eps`` are dropped.
    """

    alpha: float
    truncation_eps: float = 1e-2

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.truncation_eps > 0:
            raise DomainError("truncation_eps must be > 0")

    dim = 1

    @property
    def c_alpha(self) -> float:
        return self.alpha / gamma(1.0 - self.alpha)

    @property
    def jump_rate(self) -> float:
        """Intensity of jumps of size >= eps."""
        return self.c_alpha * self.truncation_eps ** (-self.alpha) / self.alpha

    @property
    def truncation_bias(self) -> float:
        """Mean of the removed small jumps per unit time."""
        a = self.alpha
        return self.c_alpha * self.truncation_eps ** (1.0 - a) / (1.0 - a)


@dataclass(frozen=True, eq=False)
class JumpMartingale:
    """Compensated pure-jump martingale with Levy measure ``nu`` supported in [-m, inf)^d."""

    nu: LevyMeasure
    m: float = 0.0

    def __post_init__(self):
        if self.m < 0:
            raise DomainError("m must be >= 0")
        if self.nu.support_min() < -self.m:
            raise DomainError("nu must be supported in [-m, +inf)^d")
        if not math.isfinite(self.nu.moment_condition()):
            raise DomainError("nu violates the first/second moment condition")

    @property
    def dim(self) -> int:
        return self.nu.dim


@dataclass(frozen=True)
class Poisson:
    """Poisson process with unit marks (d = 1)."""

    intensity: float = 1.0
    compensated: bool = False

    def __post_init__(self):
        if not self.intensity > 0:
            raise DomainError("intensity must be > 0")

    dim = 1


NoiseSpec = Union[Gaussian, StandardWiener, AlphaSubordinator, JumpMartingale, Poisson]

GAUSSIAN_TYPES = (Gaussian, StandardWiener)
JUMP_TYPES = (AlphaSubordinator, JumpMartingale, Poisson)


def is_gaussian(spec) -> bool:
    return isinstance(spec, GAUSSIAN_TYPES)


def regime_name(spec) -> str:
    return {
        Gaussian: "gaussian",
        StandardWiener: "standard_wiener",
        AlphaSubordinator: "alpha_subordinator",
        JumpMartingale: "jump_martingale",
        Poisson: "poisson",
    }[type(spec)]


def spec_to_dict(spec) -> dict:
    name = regime_name(spec)
    if isinstance(spec, Gaussian):
        return {"type": name, "Q": spec.Q.tolist()}
    if isinstance(spec, StandardWiener):
        return {"type": name, "d": spec.d}
    if isinstance(spec, AlphaSubordinator):
        return {"type": name, "alpha": spec.alpha, "truncation_eps": spec.truncation_eps}
    if isinstance(spec, JumpMartingale):
        return {"type": name, "nu": spec.nu.to_dict(), "m": spec.m}
    return {"type": name, "intensity": spec.intensity, "compensated": spec.compensated}


def measure_from_dict(data: dict) -> LevyMeasure:
    if "atoms" in data:
        return AtomicMeasure(data["atoms"]["marks"], data["atoms"]["weights"])
    if "power_law" in data:
        return PowerLawMeasure(**data["power_law"])
    raise DomainError("nu: expected 'atoms' or 'power_law'")


def spec_from_dict(data: dict):
    kind = data.get("type")
    if kind == "gaussian":
        return Gaussian(np.asarray(data["Q"], dtype=float))
    if kind == "standard_wiener":
        return StandardWiener(int(data.get("d", 1)))
    if kind == "alpha_subordinator":
        return AlphaSubordinator(float(data["alpha"]), float(data.get("truncation_eps", 1e-2)))
    if kind == "jump_martingale":
        return JumpMartingale(measure_from_dict(data["nu"]), float(data.get("m", 0.0)))
    if kind == "poisson":
        return Poisson(float(data.get("intensity", 1.0)), bool(data.get("compensated", False)))
    raise DomainError(f"unknown noise type {kind!r}")


# ---------------------------------------------------------------------------
# Random streams


@dataclass(frozen=True)
class SeedRecord:
    seed: int
    substream: int = 0

    def to_dict(self) -> dict:
        return {"seed": self.seed, "substream": self.substream}


def as_seed_record(seed) -> SeedRecord:
    if isinstance(seed, SeedRecord):
        return seed
    if isinstance(seed, tuple):
        return SeedRecord(int(seed[0]), int(seed[1]))
    return SeedRecord(int(seed), 0)


def substream(seed, stream: int | None = None) -> np.random.Generator:
    """Generator for substream ``stream`` of master ``seed``.

    The substream is selected through the SeedSequence spawn key, so
    streams are independent and addressable in any order.
    """
    rec = as_seed_record(seed)
    if stream is not None:
        rec = SeedRecord(rec.seed, stream)
    if not (0 <= rec.seed < 2**64):
        raise DomainError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(rec.seed, spawn_key=(rec.substream,))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Paths


def make_grid(horizon: float, grid_step: float) -> np.ndarray:
    """Uniform grid ``0, h, 2h, ...`` ending exactly at ``horizon``."""
    if not horizon > 0:
        raise DomainError("horizon must be > 0")
    if not grid_step > 0:
        raise DomainError("grid_step must be > 0")
    n = max(1, int(math.ceil(horizon / grid_step - 1e-9)))
    grid = np.arange(n + 1, dtype=float) * grid_step
    grid[-1] = horizon
    return grid


@dataclass(frozen=True, eq=False)
class LevyPath:
    """One trajectory of the driving noise.

    Gaussian paths carry per-step increments; jump paths carry jump times,
    marks, and the compensator drift rate (so ``L(t) = sum eta + drift_rate t``).
    """

    spec: object
    grid: np.ndarray
    wiener_increments: np.ndarray | None
    jump_times: np.ndarray
    jump_marks: np.ndarray
    drift_rate: np.ndarray
    seed_record: SeedRecord | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("grid", "jump_times", "jump_marks", "drift_rate", "wiener_increments"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must start at 0 and increase strictly")
        if len(self.jump_times):
            if np.any(np.diff(self.jump_times) <= 0):
                raise DomainError("jump times must increase strictly")
            if self.jump_times[0] <= 0 or self.jump_times[-1] > self.horizon:
                raise DomainError("jump times must lie in (0, horizon]")

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def dim(self) -> int:
        return len(self.drift_rate)

    @property
    def is_gaussian(self) -> bool:
        return self.wiener_increments is not None

    def wiener(self) -> np.ndarray:
        """Cumulative W on the grid, shape (n+1, d)."""
        if not self.is_gaussian:
            raise DomainError("not a Gaussian path")
        return np.vstack([np.zeros(self.dim), np.cumsum(self.wiener_increments, axis=0)])

    def wiener_at(self, times) -> np.ndarray:
        """W at arbitrary times, linearly interpolated between grid points."""
        W = self.wiener()
        t = np.asarray(times, dtype=float)
        return np.stack([np.interp(t, self.grid, W[:, i]) for i in range(self.dim)], axis=-1)

    def levy_at(self, times) -> np.ndarray:
        """``L(t)`` (right-continuous), shape (n, d)."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        if self.is_gaussian:
            return self.wiener_at(t)
        counts = np.searchsorted(self.jump_times, t, side="right")
        csum = np.vstack([np.zeros(self.dim), np.cumsum(self.jump_marks, axis=0)])
        return csum[counts] + t[:, None] * self.drift_rate

    def increments(self, times) -> np.ndarray:
        """``L(t_{k+1}) - L(t_k)`` for consecutive ``times``."""
        return np.diff(self.levy_at(times), axis=0)

    def event_times(self, times=None) -> np.ndarray:
        """Sorted union of ``times`` (default: grid) and the jump times."""
        base = self.grid if times is None else np.asarray(times, dtype=float)
        return np.union1d(base, self.jump_times)

    def with_jumps(self, times, marks) -> "LevyPath":
        """Same grid and spec, jump skeleton replaced (test hook)."""
        marks = np.asarray(marks, dtype=float).reshape(len(times), self.dim)
        return LevyPath(
            self.spec, self.grid, None, np.asarray(times, dtype=float), marks,
            self.drift_rate, self.seed_record, dict(self.metadata),
        )

    def aligned_to(self, step: float) -> "LevyPath":
        """Jump path with every jump moved up to the next multiple of ``step``.

        Jumps landing on the same node are merged (marks added). Residual
        checks use this to put all jumps on grid nodes.
        """
        if self.is_gaussian or len(self.jump_times) == 0:
            return self
        nodes = np.minimum(np.ceil(self.jump_times / step - 1e-9) * step, self.horizon)
        times, inv = np.unique(nodes, return_inverse=True)
        marks = np.zeros((len(times), self.dim))
        np.add.at(marks, inv, self.jump_marks)
        meta = dict(self.metadata, aligned_step=step)
        return LevyPath(self.spec, self.grid, None, times, marks, self.drift_rate, self.seed_record, meta)

    @classmethod
    def from_jumps(cls, spec, horizon: float, grid_step: float, times=(), marks=None) -> "LevyPath":
        """Jump path with a prescribed skeleton; drift rate follows from ``spec``."""
        times = np.asarray(times, dtype=float)
        d = spec.dim
        if marks is None:
            marks = np.ones((len(times), d))
        marks = np.asarray(marks, dtype=float).reshape(len(times), d)
        return cls(spec, make_grid(horizon, grid_step), None, times, marks, _drift_rate(spec))

    @classmethod
    def from_wiener(cls, spec, grid, increments) -> "LevyPath":
        inc = np.asarray(increments, dtype=float)
        if inc.ndim == 1:
            inc = inc[:, None]
        return cls(spec, np.asarray(grid, dtype=float), inc, np.empty(0), np.empty((0, spec.dim)),
                   np.zeros(spec.dim))


def _drift_rate(spec) -> np.ndarray:
    if isinstance(spec, JumpMartingale):
        return -np.asarray(spec.nu.first_moment, dtype=float)
    if isinstance(spec, Poisson) and spec.compensated:
        return np.array([-spec.intensity])
    return np.zeros(spec.dim)


def _gaussian_factor(Q: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(Q)
        return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_path(spec, horizon: float, grid_step: float, seed=0, *, zero_noise: bool = False) -> LevyPath:
    """Simulate one path of ``spec`` on ``[0, horizon]``.

    ``seed`` is an int, a ``(seed, substream)`` tuple or a :class:`SeedRecord`.
    ``zero_noise`` forces a path with no randomness (zero increments, no jumps).
    """
    grid = make_grid(horizon, grid_step)
    rec = as_seed_record(seed)
    d = spec.dim
    drift = _drift_rate(spec)
    meta: dict = {}
    if isinstance(spec, AlphaSubordinator):
        meta = {"jump_rate": spec.jump_rate, "truncation_bias_rate": spec.truncation_bias}
    if zero_noise:
        meta["zero_noise"] = True
        if is_gaussian(spec):
            return LevyPath(spec, grid, np.zeros((len(grid) - 1, d)), np.empty(0),
                            np.empty((0, d)), np.zeros(d), rec, meta)
        return LevyPath(spec, grid, None, np.empty(0), np.empty((0, d)), drift, rec, meta)

    rng = substream(rec)
    if is_gaussian(spec):
        dt = np.diff(grid)
        z = rng.standard_normal((len(dt), d))
        inc = (z @ _gaussian_factor(spec.Q).T) * np.sqrt(dt)[:, None]
        return LevyPath(spec, grid, inc, np.empty(0), np.empty((0, d)), np.zeros(d), rec, meta)

    if isinstance(spec, Poisson):
        times = []
        t = rng.exponential(1.0 / spec.intensity)
        while t <= horizon:
            times.append(t)
            t += rng.exponential(1.0 / spec.intensity)
        times = np.asarray(times)
        marks = np.ones((len(times), 1))
    else:
        if isinstance(spec, AlphaSubordinator):
            rate = spec.jump_rate
        else:
            rate = spec.nu.total_mass
        n = rng.poisson(rate * horizon)
        times = np.sort(rng.uniform(0.0, horizon, n))
        if isinstance(spec, AlphaSubordinator):
            # P(eta > y) = (y / eps)^(-alpha), y >= eps
            u = 1.0 - rng.random(n)
            marks = (spec.truncation_eps * u ** (-1.0 / spec.alpha))[:, None]
        else:
            marks = spec.nu.sample_marks(rng, n).reshape(n, d)
        keep = times > 0
        times, marks = times[keep], marks[keep]
    return LevyPath(spec, grid, None, times, marks, drift, rec, meta)


# ---------------------------------------------------------------------------
# Stochastic exponentials


@dataclass(frozen=True, eq=False)
class ExponentialPath:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("grid", "values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _times(path: LevyPath, times) -> np.ndarray:
    return path.grid if times is None else np.atleast_1d(np.asarray(times, dtype=float))


def gaussian_log_inverse(path: LevyPath, g: VolatilityFn) -> tuple[np.ndarray, np.ndarray]:
    """``log M_g^{-1}`` on the grid and the per-cell quadratic rates ``<Q g, g>``.

    Both integrals use the left-point value of ``g`` on each cell.
    """
    if not path.is_gaussian:
        raise DomainError("path is not Gaussian")
    if g.dim != path.dim:
        raise DomainError("volatility dimension does not match the noise")
    gl = g(path.grid[:-1])
    q = np.einsum("ki,ij,kj->k", gl, np.asarray(path.spec.Q, dtype=float), gl)
    dt = np.diff(path.grid)
    steps = np.einsum("ki,ki->k", gl, path.wiener_increments) - 0.5 * q * dt
    return np.concatenate([[0.0], np.cumsum(steps)]), q


def stochastic_exponential_gaussian(path: LevyPath, g: VolatilityFn) -> ExponentialPath:
    """``M_g(t) = exp(-int <g, dW> + 1/2 int <Qg, g> ds)`` on the path grid."""
    log_minv, _ = gaussian_log_inverse(path, g)
    return ExponentialPath(path.grid, np.exp(-log_minv))


def alpha_jump_factors(marks: np.ndarray, alpha: float) -> np.ndarray:
    """Per-jump multipliers ``(1 + eta)^(1 - alpha)`` of the alpha-case exponential."""
    return (1.0 + np.asarray(marks, dtype=float).reshape(-1)) ** (1.0 - alpha)


def stochastic_exponential_alpha(path: LevyPath, alpha: float, times=None) -> ExponentialPath:
    """``M(t) = prod_{tau_i <= t} (1 + eta_i)^(1 - alpha)``.

    This is the Doleans-Dade exponential of the pure-jump process with
    jumps ``(1 + eta)^(1 - alpha) - 1``; the continuous part cancels.
    """
    if not isinstance(path.spec, AlphaSubordinator):
        raise DomainError("path is not an alpha-subordinator path")
    if not (0 < alpha < 1):
        raise DomainError("alpha must lie in (0, 1)")
    t = _times(path, times)
    logf = np.concatenate([[0.0], np.cumsum(np.log(alpha_jump_factors(path.jump_marks, alpha)))])
    return ExponentialPath(t, np.exp(logf[np.searchsorted(path.jump_times, t, side="right")]))


def jump_factors(path: LevyPath, g: VolatilityFn) -> np.ndarray:
    """``1 + <g(tau_i), eta_i>`` per jump; raises if any is not positive."""
    if len(path.jump_times) == 0:
        return np.empty(0)
    gj = np.atleast_2d(g(path.jump_times))
    f = 1.0 + np.einsum("ki,ki->k", gj, path.jump_marks)
    bad = np.flatnonzero(f <= 0)
    if len(bad):
        i = bad[0]
        raise PositivityError(
            f"1 + <g, eta> = {f[i]:.6g} <= 0 at jump time {path.jump_times[i]:.6g}"
        )
    return f


def stochastic_exponential_jump(path: LevyPath, g: VolatilityFn, times=None) -> ExponentialPath:
    """``A(t) = exp(int_0^t <g, drift_rate> ds) prod_{tau_i <= t} (1 + <g(tau_i), eta_i>)``."""
    if not isinstance(path.spec, (JumpMartingale, Poisson)):
        raise DomainError("path is not a jump-martingale or Poisson path")
    t = _times(path, times)
    factors = jump_factors(path, g)
    logp = np.concatenate([[0.0], np.cumsum(np.log(factors))])
    drift = np.array([g.integrate(0.0, s) @ path.drift_rate for s in t])
    vals = np.exp(drift + logp[np.searchsorted(path.jump_times, t, side="right")])
    return ExponentialPath(t, vals)
