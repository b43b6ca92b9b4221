import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjmlin.blowup import (
    analytic_lower_bound,
    crosses,
    deterministic_crossing,
    estimate_nonexistence,
    eta_process,
    jensen_lower_bound,
)
from hjmlin.errors import DomainError
from hjmlin.noise import Poisson, SeedRecord, StandardWiener, simulate_path


def test_eta_zero_noise_closed_form():
    p = simulate_path(StandardWiener(), 1.0, 1e-4, 0, zero_noise=True)
    eta = eta_process(2.0, 3.0, p)
    s = p.grid
    expect = 1 / (2 * (3 - s)) + np.expm1(-s / 2)
    assert eta == pytest.approx(expect, abs=1e-9)
    assert eta[0] == pytest.approx(1 / 6)


def test_eta_grid_subset_and_errors():
    p = simulate_path(StandardWiener(), 1.0, 0.25, 0)
    full = eta_process(1.0, 2.0, p)
    assert eta_process(1.0, 2.0, p, grid=[0.0, 0.5]) == pytest.approx(full[[0, 2]])
    with pytest.raises(DomainError):
        eta_process(1.0, 2.0, p, grid=[0.3])
    with pytest.raises(DomainError):
        eta_process(1.0, 1.0, p)
    with pytest.raises(DomainError):
        eta_process(1.0, 2.0, simulate_path(Poisson(), 1.0, 0.25, 0))


def test_zero_noise_crossing_matches_criterion():
    for K in (0.5, 2.0, 5.0, 20.0):
        p = simulate_path(StandardWiener(), 0.5, 1e-4, 0, zero_noise=True)
        assert crosses(K, 1.0, p) == deterministic_crossing(K, 0.5, 1.0)


def test_small_level_never_crosses():
    est = estimate_nonexistence(1e-3, 0.5, 1.0, 500, 1e-2, seed=1)
    assert est.prob == 0.0 and est.ci_halfwidth == 0.0


def test_large_level_always_crosses():
    assert estimate_nonexistence(1e4, 0.5, 1.0, 300, 1e-2, seed=1).prob == 1.0


def test_monotone_in_level_and_time():
    """Common random numbers: each path crosses for larger K and later t."""
    ks = [2.0, 5.0, 10.0, 30.0]
    probs = [estimate_nonexistence(K, 0.5, 1.0, 400, 1e-2, seed=7).prob for K in ks]
    assert probs == sorted(probs)
    pt = [estimate_nonexistence(10.0, t, 1.0, 400, 1e-2, seed=7).prob for t in (0.1, 0.3, 0.6)]
    assert pt == sorted(pt)


def test_seeds_reproducible_and_thread_independent():
    a = estimate_nonexistence(8.0, 0.5, 1.0, 200, 1e-2, seed=11)
    b = estimate_nonexistence(8.0, 0.5, 1.0, 200, 1e-2, seed=11, threads=4)
    assert a == b
    assert a.to_dict()["ci"] == a.ci_halfwidth
    # path i is substream i
    manual = np.mean([crosses(8.0, 1.0, simulate_path(StandardWiener(), 0.5, 1e-2, SeedRecord(11, i)))
                      for i in range(200)])
    assert a.prob == manual


def test_bound_examples():
    # K t (S - t) = 1 puts the printed bound's argument at 0
    assert analytic_lower_bound(4.0, 0.5, 1.0) == pytest.approx(0.5)
    assert analytic_lower_bound(1e6, 0.5, 1.0) == pytest.approx(1.0)
    assert analytic_lower_bound(1e-6, 0.5, 1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        analytic_lower_bound(1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        jensen_lower_bound(-1.0, 0.5, 1.0)


@given(st.floats(0.1, 100), st.floats(0.05, 0.9))
def test_jensen_bound_is_monotone(K, t):
    assert jensen_lower_bound(K, t, 1.0) <= jensen_lower_bound(2 * K, t, 1.0)
    assert 0.0 <= jensen_lower_bound(K, t, 1.0) <= 1.0


def test_jensen_bound_below_monte_carlo():
    for K in (5.0, 10.0, 20.0):
        est = estimate_nonexistence(K, 0.5, 1.0, 2000, 1e-2, seed=3)
        assert jensen_lower_bound(K, 0.5, 1.0) <= est.prob + est.ci_halfwidth


def test_integrated_wiener_variance():
    """The bound rests on int_0^t W ~ N(0, t^3/3)."""
    t, n = 0.5, 100_000
    rng = np.random.default_rng(2)
    steps = 100
    dW = rng.normal(scale=math.sqrt(t / steps), size=(n, steps))
    W = np.cumsum(dW, axis=1)
    integral = (W.sum(axis=1) - 0.5 * W[:, -1]) * t / steps
    assert integral.var() == pytest.approx(t**3 / 3, rel=0.02)
