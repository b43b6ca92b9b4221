"""Laplace exponents ``J(xi) = log E exp(-<xi, L(1)>)`` and the HJM drift."""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad_vec

from .errors import DomainError
from .noise import (
    AlphaSubordinator,
    AtomicMeasure,
    Gaussian,
    JumpMartingale,
    Poisson,
    StandardWiener,
)
from .volatility import VolatilityFn

__all__ = [
    "VolatilityFn",
    "laplace_exponent",
    "grad_laplace_exponent",
    "hjm_drift",
    "exponent_along",
    "flow_drift",
    "flow_offset",
]

INF = math.inf
QUAD_EPSABS = 1e-10


def _as_xi(spec, xi) -> np.ndarray:
    x = np.asarray(xi, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != spec.dim:
        if spec.dim == 1:
            x = x[..., None]
        else:
            raise DomainError(f"xi must have trailing dimension {spec.dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError("xi must be finite")
    return x


def _measure_j(nu, x: np.ndarray) -> np.ndarray:
    """``int (e^{-<x, eta>} - 1 + <x, eta>) nu(d eta)`` for x of shape (..., d)."""
    if isinstance(nu, AtomicMeasure):
        a = x @ nu.marks.T
        return (np.expm1(-a) + a) @ nu.weights
    flat = x[..., 0].reshape(-1)
    res, _ = quad_vec(
        lambda eta: (np.expm1(-flat * eta) + flat * eta) * nu.density(eta),
        nu.lower, nu.upper, epsabs=QUAD_EPSABS, epsrel=1e-12,
    )
    return np.asarray(res).reshape(x.shape[:-1])


def _measure_grad(nu, x: np.ndarray) -> np.ndarray:
    """``int eta (1 - e^{-<x, eta>}) nu(d eta)``, shape (..., d)."""
    if isinstance(nu, AtomicMeasure):
        a = x @ nu.marks.T
        return (-np.expm1(-a) * nu.weights) @ nu.marks
    flat = x[..., 0].reshape(-1)
    res, _ = quad_vec(
        lambda eta: -np.expm1(-flat * eta) * eta * nu.density(eta),
        nu.lower, nu.upper, epsabs=QUAD_EPSABS, epsrel=1e-12,
    )
    return np.asarray(res).reshape(x.shape)


def laplace_exponent(spec, xi):
    """``J(xi)``; ``+inf`` outside the finiteness domain (alpha case, xi < 0).

    Returns a float for a single xi, an array for a batch (trailing axis d).
    """
    x = _as_xi(spec, xi)
    if isinstance(spec, (Gaussian, StandardWiener)):
        out = 0.5 * np.einsum("...i,ij,...j->...", x, spec.Q, x)
    elif isinstance(spec, AlphaSubordinator):
        s = x[..., 0]
        with np.errstate(invalid="ignore"):
            out = np.where(s >= 0, -np.abs(s) ** spec.alpha, INF)
    elif isinstance(spec, JumpMartingale):
        out = _measure_j(spec.nu, x)
    elif isinstance(spec, Poisson):
        s = x[..., 0]
        out = spec.intensity * (np.expm1(-s) + (s if spec.compensated else 0.0))
    else:
        raise DomainError(f"unsupported noise {type(spec).__name__}")
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def grad_laplace_exponent(spec, xi) -> np.ndarray:
    """``grad J(xi)``, shape (..., d). Alpha case requires ``xi > 0``."""
    x = _as_xi(spec, xi)
    if isinstance(spec, (Gaussian, StandardWiener)):
        out = x @ np.asarray(spec.Q).T
    elif isinstance(spec, AlphaSubordinator):
        if np.any(x <= 0):
            raise DomainError("grad J for the alpha case needs xi > 0")
        out = -spec.alpha * x ** (spec.alpha - 1.0)
    elif isinstance(spec, JumpMartingale):
        out = _measure_grad(spec.nu, x)
    elif isinstance(spec, Poisson):
        out = spec.intensity * (-np.exp(-x) + (1.0 if spec.compensated else 0.0))
    else:
        raise DomainError(f"unsupported noise {type(spec).__name__}")
    return np.asarray(out, dtype=float)


def exponent_along(spec, g_t, y):
    """``(J(g_t y), <g_t, grad J(g_t y)>)`` for a scalar/array ``y`` and fixed ``g_t``.

    The second value is ``d/dy J(g_t y)``. Alpha case: the derivative at
    ``y <= 0`` is returned as ``-inf`` (J is not differentiable there).
    """
    g = np.atleast_1d(np.asarray(g_t, dtype=float))
    y = np.asarray(y, dtype=float)
    if isinstance(spec, (Gaussian, StandardWiener)):
        q = float(g @ np.asarray(spec.Q) @ g)
        return 0.5 * q * y * y, q * y
    if isinstance(spec, Poisson):
        lam, a = spec.intensity, g[0]
        e = np.exp(-a * y)
        if spec.compensated:
            return lam * (np.expm1(-a * y) + a * y), lam * a * (1.0 - e)
        return lam * np.expm1(-a * y), -lam * a * e
    if isinstance(spec, AlphaSubordinator):
        s = g[0] * y
        with np.errstate(divide="ignore", invalid="ignore"):
            J = np.where(s >= 0, -np.abs(s) ** spec.alpha, INF)
            dJ = np.where(s > 0, -spec.alpha * g[0] * np.abs(s) ** (spec.alpha - 1.0), -INF)
        return J, dJ
    if isinstance(spec, JumpMartingale):
        nu = spec.nu
        if isinstance(nu, AtomicMeasure):
            a = nu.marks @ g  # (k,)
            ay = y[..., None] * a
            J = (np.expm1(-ay) + ay) @ nu.weights
            dJ = (-np.expm1(-ay)) @ (nu.weights * a)
            return J, dJ
        a = g[0]
        flat = y.reshape(-1)

        def integrand(eta):
            ay = a * eta * flat
            dens = nu.density(eta)
            return np.concatenate([(np.expm1(-ay) + ay) * dens, -np.expm1(-ay) * a * eta * dens])

        res, _ = quad_vec(integrand, nu.lower, nu.upper, epsabs=QUAD_EPSABS, epsrel=1e-12)
        n = flat.size
        return res[:n].reshape(y.shape), res[n:].reshape(y.shape)
    raise DomainError(f"unsupported noise {type(spec).__name__}")


def flow_offset(spec) -> float:
    """Constant added to ``J`` in the flow drift.

    Zero except for the Poisson regime, whose flow equation is
    ``dY = intensity * exp(-g Y) dt + Y dL`` (equal to ``J(gY) + intensity``
    for the raw process, and the same after compensation).
    """
    return float(spec.intensity) if isinstance(spec, Poisson) else 0.0


def flow_drift(spec, g_t, y):
    """Deterministic drift of the flow equation, excluding the compensator in ``dL``."""
    J, _ = exponent_along(spec, g_t, y)
    return J + flow_offset(spec)


def hjm_drift(spec, g_t, r_tx, u_tx):
    """HJM drift ``d/dx J(g u(t, x)) = <g, grad J(g u)> r``; zero wherever ``r = 0``."""
    r = np.asarray(r_tx, dtype=float)
    u = np.asarray(u_tx, dtype=float)
    r, u = np.broadcast_arrays(r, u)
    out = np.zeros(r.shape)
    nz = r != 0
    if np.any(nz):
        g = np.atleast_1d(np.asarray(g_t, dtype=float))
        if isinstance(spec, AlphaSubordinator) and np.any(g[0] * u[nz] <= 0):
            raise DomainError("g u must be > 0 for the alpha-case drift")
        _, dJ = exponent_along(spec, g, u[nz])
        out[nz] = dJ * r[nz]
    return float(out) if out.ndim == 0 else out
