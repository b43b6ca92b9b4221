"""Non-existence of regular solutions for large initial curves.

For ``d = 1``, ``g = 1`` the Gaussian forward rate ``f(., S)`` stops existing
once

    eta(s, S) = (int_s^S f(0, v) dv)^{-1} - 1/2 int_0^s M^{-1}(v) dv

reaches zero, with ``M^{-1}(v) = exp(W(v) - v/2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .curve import InitialCurve
from .errors import DomainError
from .noise import LevyPath, SeedRecord, StandardWiener, as_seed_record, gaussian_log_inverse, simulate_path
from .volatility import VolatilityFn

_UNIT = VolatilityFn.constant(1.0)


@dataclass(frozen=True)
class BlowupEstimate:
    prob: float
    ci_halfwidth: float
    n_paths: int
    K: float
    t: float
    S: float
    grid_step: float
    seed: int
    lower_bound: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci"] = out.pop("ci_halfwidth")
        return out


def _as_curve(level_or_curve) -> InitialCurve:
    if isinstance(level_or_curve, InitialCurve):
        return level_or_curve
    K = float(level_or_curve)
    if not K > 0:
        raise DomainError("K must be > 0")
    return InitialCurve.constant(K)


def eta_process(level_or_curve, S: float, path: LevyPath, grid=None) -> np.ndarray:
    """``eta(s, S)`` at the path grid points ``s`` (or at the points of ``grid`` on it).

    The ``dv`` integral is the trapezoid rule on the path grid.
    """
    if not isinstance(path.spec, StandardWiener) or path.dim != 1:
        raise DomainError("eta is defined for the one-dimensional standard Wiener case")
    curve = _as_curve(level_or_curve)
    s = path.grid
    if S <= s[-1]:
        raise DomainError("S must exceed every evaluation time")
    minv = np.exp(gaussian_log_inverse(path, _UNIT)[0])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (minv[1:] + minv[:-1]) * np.diff(s))])
    eta = 1.0 / curve.antiderivative(s, np.full_like(s, S)) - 0.5 * integral
    if grid is None:
        return eta
    idx = np.searchsorted(s, np.asarray(grid, dtype=float))
    if np.any(idx >= len(s)) or not np.allclose(s[idx], grid, rtol=0, atol=1e-12):
        raise DomainError("grid points must lie on the path grid")
    return eta[idx]


def crosses(level_or_curve, S: float, path: LevyPath) -> bool:
    """Whether ``eta(., S)`` reaches ``<= 0`` on the path grid."""
    return bool(np.min(eta_process(level_or_curve, S, path)) <= 0.0)


def _check_window(K, t, S):
    if not (0 < t < S):
        raise DomainError("need 0 < t < S")
    if not K > 0:
        raise DomainError("K must be > 0")


def estimate_nonexistence(K: float, t: float, S: float, n_paths: int, grid_step: float,
                          seed=0, threads: int = 1) -> BlowupEstimate:
    """Monte Carlo probability that ``eta(s, S)`` hits zero for some ``s <= t``.

    Path ``i`` uses substream ``i`` of ``seed``; the result does not depend on
    ``threads``.
    """
    _check_window(K, t, S)
    if n_paths <= 0:
        raise DomainError("n_paths must be > 0")
    rec = as_seed_record(seed)
    spec = StandardWiener()
    curve = InitialCurve.constant(K)

    def run(i: int) -> bool:
        path = simulate_path(spec, t, grid_step, SeedRecord(rec.seed, i))
        return crosses(curve, S, path)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = list(pool.map(run, range(n_paths), chunksize=max(1, n_paths // (8 * threads))))
    else:
        hits = [run(i) for i in range(n_paths)]
    p = sum(hits) / n_paths
    return BlowupEstimate(
        prob=p, ci_halfwidth=1.96 * math.sqrt(p * (1 - p) / n_paths), n_paths=n_paths,
        K=float(K), t=float(t), S=float(S), grid_step=float(grid_step), seed=rec.seed,
        lower_bound=analytic_lower_bound(K, t, S),
    )


def analytic_lower_bound(K: float, t: float, S: float) -> float:
    """``Phi(t e^{t/2} log[t (S - t) K] / sqrt(t^3 / 3))``, the bound as stated.

    Not a valid minorant in general; see :func:`jensen_lower_bound`.
    """
    _check_window(K, t, S)
    return float(norm.cdf(t * math.exp(t / 2) * math.log(t * (S - t) * K) / math.sqrt(t**3 / 3)))


def jensen_lower_bound(K: float, t: float, S: float) -> float:
    """A provable minorant of the non-existence probability.

    By Jensen, ``1/2 int_0^t e^{W - v/2} dv >= t/2 exp(int_0^t W / t - t/4)``, so
    crossing by ``t`` is implied by ``int_0^t W >= t^2/4 - t log(t (S - t) K / 2)``,
    and ``int_0^t W ~ N(0, t^3/3)``.
    """
    _check_window(K, t, S)
    z = (t * math.log(t * (S - t) * K / 2) - t**2 / 4) / math.sqrt(t**3 / 3)
    return float(norm.cdf(z))


def deterministic_crossing(K: float, t: float, S: float) -> bool:
    """Zero-noise criterion ``(K (S - t))^{-1} <= 1 - e^{-t/2}``."""
    _check_window(K, t, S)
    return 1.0 / (K * (S - t)) <= -math.expm1(-t / 2)
