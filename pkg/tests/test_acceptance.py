"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io
import math
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from hjmlin.blowup import analytic_lower_bound, estimate_nonexistence, jensen_lower_bound
from hjmlin.cli import cmd_simulate, load_config
from hjmlin.curve import InitialCurve, forward_surface
from hjmlin.flow import alpha_flow, flow_derivative, gaussian_flow, jump_martingale_flow, poisson_flow
from hjmlin.noise import (
    AlphaSubordinator,
    AtomicMeasure,
    JumpMartingale,
    LevyPath,
    Poisson,
    SeedRecord,
    StandardWiener,
    simulate_path,
)
from hjmlin.verify import check_drift_identity, check_poisson_equivalence, check_strong_solution, corrupted
from hjmlin.volatility import VolatilityFn

SEED = 20240601
ROOT = Path(__file__).resolve().parents[1]
UNIT = VolatilityFn.constant(1.0)
ZERO = VolatilityFn.constant(0.0)
LN2 = math.log(2)

# pinned tolerances
C1_SEEDS, C1_N, C1_ORDER, C1_BUDGET = 20, 320, 0.5, 60.0
C2_TOL = 1e-8
C3_TOL = 1e-10
C4_TOL = 1e-12
C5_EXACT_TOL, C5_JM_TOL, C5_PATHS = 1e-12, 1e-8, 100
C6_TOL, C6_SURFACES = 1e-12, 20
C7_TOL, C7_POINTS, C7_H = 1e-4, 50, 1e-4
C8_TOL, C8_SAMPLES = 1e-12, 1000
C9_N, C9_STEP, C9_BUDGET, C9_FLOOR = 10_000, 1e-3, 120.0, 0.9
C10_SEEDS = 100
C11_BIAS, C11_FLOOR = 1e-3, 1e-4


@dataclass
class Outcome:
    number: int
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:>2}: {self.detail}"


RESULTS: dict[int, Outcome] = {}


def criterion_1() -> Outcome:
    spec, curve = StandardWiener(), InitialCurve.constant(1.0)
    start = time.perf_counter()
    passed, orders = 0, []
    for i in range(C1_SEEDS):
        p = simulate_path(spec, 0.5, 0.5 / C1_N, SeedRecord(SEED, i))
        s = forward_surface(curve, UNIT, spec, p, np.linspace(0.0, 1.0, C1_N + 1))
        rep = check_strong_solution(s, path=p, spec=spec, g=UNIT, levels=3, order_floor=C1_ORDER)
        passed += rep.passed
        orders.append(rep.empirical_order)
    elapsed = time.perf_counter() - start
    ok = passed == C1_SEEDS and elapsed <= C1_BUDGET
    return Outcome(1, ok, f"strong solution {passed}/{C1_SEEDS} seeds pass, median order "
                          f"{np.median(orders):.3f} (floor {C1_ORDER}), {elapsed:.1f}s")


def criterion_2() -> Outcome:
    p = simulate_path(StandardWiener(), 3.0, 1e-3, 0, zero_noise=True)
    y = gaussian_flow(1.0, UNIT, p, times=[2 * LN2]).values[0]
    tau = gaussian_flow(2.0, UNIT, p).tau
    e1, e2 = abs(y - 1.0), abs(tau - 2 * LN2)
    return Outcome(2, max(e1, e2) <= C2_TOL, f"|Y(2ln2,1)-1| = {e1:.2e}, |tau(2)-2ln2| = {e2:.2e} (tol {C2_TOL})")


def criterion_3() -> Outcome:
    p = LevyPath.from_jumps(AlphaSubordinator(0.5), 3.0, 0.01)
    ts = [0.5, 1.0, 1.5]
    err = max(abs(v - (1 - t / 2) ** 2) for t, v in zip(ts, alpha_flow(1.0, 0.5, p, times=ts).values))
    late = alpha_flow(1.0, 0.5, p, times=np.linspace(2.0, 3.0, 101)).values
    ok = err <= C3_TOL and bool(np.all(late == 0.0))
    return Outcome(3, ok, f"max err {err:.2e} (tol {C3_TOL}), Y = 0 exactly on [2,3]: {bool(np.all(late == 0.0))}")


def criterion_4() -> Outcome:
    spec = AlphaSubordinator(0.5)
    jumped = LevyPath.from_jumps(spec, 2.0, 0.01, [1.0], [3.0])
    before = alpha_flow(1.0, 0.5, LevyPath.from_jumps(spec, 2.0, 0.01), times=[1.0]).values[0]
    after = alpha_flow(1.0, 0.5, jumped, times=[1.0]).values[0]
    e1, e2 = abs(after - 1.0), abs(after - before * (1 + 3.0))
    return Outcome(4, max(e1, e2) <= C4_TOL, f"|Y(1)-1| = {e1:.2e}, |Y(1)-Y(1-)(1+eta)| = {e2:.2e} (tol {C4_TOL})")


def _poisson_oracle(x0, jumps, t):
    Z, last = math.exp(x0), 0.0
    for tau in jumps:
        if tau > t:
            break
        Z = (Z + tau - last) ** 2
        last = tau
    return math.log(Z + t - last)


def criterion_5() -> Outcome:
    rng = np.random.default_rng(SEED)
    exact_err = jm_err = 0.0
    for i in range(C5_PATHS):
        p = simulate_path(Poisson(), 2.0, 0.01, SeedRecord(SEED, i))
        x0 = float(rng.uniform(0.0, 2.0))
        ref = np.array([_poisson_oracle(x0, p.jump_times, t) for t in p.grid])
        scale = np.maximum(1.0, np.abs(ref))
        exact = poisson_flow(x0, p).values
        jm = jump_martingale_flow(x0, UNIT, Poisson(), p).values
        exact_err = max(exact_err, float(np.max(np.abs(exact - ref) / scale)))
        jm_err = max(jm_err, float(np.max(np.abs(jm - ref) / scale)))
    ok = exact_err <= C5_EXACT_TOL and jm_err <= C5_JM_TOL
    return Outcome(5, ok, f"exact vs recursion {exact_err:.2e} (tol {C5_EXACT_TOL}), generic integrator "
                          f"{jm_err:.2e} (tol {C5_JM_TOL}) over {C5_PATHS} paths")


def criterion_6() -> Outcome:
    rng = np.random.default_rng(SEED + 6)
    worst = 0.0
    for i in range(C6_SURFACES):
        curve = InitialCurve(np.linspace(0.0, 3.0, 5), rng.uniform(0.0, 2.0, 5))
        p = simulate_path(Poisson(), 1.0, 1 / 64, SeedRecord(SEED, i))
        rep = check_poisson_equivalence(curve, p, x_grid=np.linspace(0.0, 1.0, 33), tol=C6_TOL)
        worst = max(worst, rep.max_abs)
    return Outcome(6, worst <= C6_TOL, f"max node-wise difference {worst:.2e} over {C6_SURFACES} surfaces (tol {C6_TOL})")


def criterion_7() -> Outcome:
    spec = JumpMartingale(AtomicMeasure.dirac(1.0))
    rng = np.random.default_rng(SEED + 7)
    worst, initial_ok = 0.0, True
    for i in range(C7_POINTS):
        p = simulate_path(spec, 2.0, 0.01, SeedRecord(SEED, i))
        x0 = float(rng.uniform(0.1, 2.0))
        k = int(rng.integers(1, len(p.grid)))
        f = flow_derivative(jump_martingale_flow(x0, UNIT, spec, p), UNIT, spec, p)
        hi = jump_martingale_flow(x0 + C7_H, UNIT, spec, p).values[k]
        lo = jump_martingale_flow(x0 - C7_H, UNIT, spec, p).values[k]
        fd = (hi - lo) / (2 * C7_H)
        worst = max(worst, abs(f.dvalues[k] - fd) / abs(fd))
        initial_ok &= f.dvalues[0] == 1.0
    ok = worst <= C7_TOL and initial_ok
    return Outcome(7, ok, f"max rel err {worst:.2e} at {C7_POINTS} points (tol {C7_TOL}), dY/dx(0) = 1: {initial_ok}")


def criterion_8() -> Outcome:
    rng = np.random.default_rng(SEED + 8)
    g = rng.normal(size=C8_SAMPLES)
    r = rng.uniform(-5, 5, C8_SAMPLES)
    u = rng.uniform(-5, 5, C8_SAMPLES)
    worst = max(check_drift_identity([g[i]], r[i:i + 1], u[i:i + 1]) for i in range(C8_SAMPLES))
    return Outcome(8, worst <= C8_TOL, f"max abs diff {worst:.2e} over {C8_SAMPLES} samples (tol {C8_TOL})")


def criterion_9() -> Outcome:
    t, S = 0.5, 1.0
    start = time.perf_counter()
    ests = [estimate_nonexistence(K, t, S, C9_N, C9_STEP, seed=SEED) for K in (1.0, 10.0, 100.0)]
    elapsed = time.perf_counter() - start
    monotone = all(b.prob >= a.prob - (a.ci_halfwidth + b.ci_halfwidth) for a, b in zip(ests, ests[1:]))
    above = [e.prob >= e.lower_bound - 2 * e.ci_halfwidth for e in ests]
    ok = monotone and all(above) and ests[-1].prob > C9_FLOOR and elapsed <= C9_BUDGET
    parts = ", ".join(f"K={e.K:g}: {e.prob:.4f}+-{e.ci_halfwidth:.4f} (bound {e.lower_bound:.4g}, "
                      f"jensen {jensen_lower_bound(e.K, t, S):.3g})" for e in ests)
    return Outcome(9, ok, f"{parts}; monotone {monotone}, above bound {above}, {elapsed:.1f}s")


def _random_curve(rng, positive):
    lo = 0.05 if positive else 0.0
    vals = rng.uniform(lo, 3.0, 4)
    if not positive:
        vals[rng.integers(0, 4)] = 0.0
    return InitialCurve(np.sort(np.concatenate([[0.0], rng.uniform(0.1, 2.0, 3)])), vals)


def criterion_10() -> Outcome:
    rng = np.random.default_rng(SEED + 10)
    regimes = {
        "gaussian": (StandardWiener(), True),
        "alpha": (AlphaSubordinator(0.5), False),
        "poisson": (Poisson(), False),
        "jump_martingale": (JumpMartingale(AtomicMeasure([[1.0], [-0.5]], [1.0, 0.5]), m=0.5), False),
    }
    xg = np.linspace(0.0, 1.0, 33)
    bad = []
    for name, (spec, positive) in regimes.items():
        for i in range(C10_SEEDS):
            curve = _random_curve(rng, positive)
            p = simulate_path(spec, 1.0, 1 / 64, SeedRecord(SEED, i))
            s = forward_surface(curve, UNIT, spec, p, xg)
            finite = s.values[~s.blown_up]
            if np.any(finite < 0) or (positive and np.any(finite <= 0)):
                bad.append((name, i))
    return Outcome(10, not bad, f"{len(bad)} violations over {C10_SEEDS} seeds x {len(regimes)} regimes")


def criterion_11() -> Outcome:
    curve = InitialCurve([0.0, 1.0, 2.0], [0.02, 0.04, 0.05])
    p = simulate_path(StandardWiener(), 0.5, 1 / 128, SEED)
    s = forward_surface(curve, ZERO, StandardWiener(), p, np.linspace(0.0, 1.0, 65))
    rep = check_strong_solution(corrupted(s, C11_BIAS), path=p, spec=StandardWiener(), g=ZERO)
    floor = min(e for _, e in rep.per_refinement)
    ok = not rep.passed and floor >= C11_FLOOR
    return Outcome(11, ok, f"biased surface check passed={rep.passed}, residual floor {floor:.2e} (need >= {C11_FLOOR})")


def criterion_12() -> Outcome:
    cfg = load_config(ROOT / "configs" / "gaussian.json", overrides=["x_max=0.25"])
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a.csv", Path(tmp) / "b.csv"
        with contextlib.redirect_stdout(io.StringIO()):
            cmd_simulate(cfg, str(a))
            cmd_simulate(cfg, str(b))
        same = a.read_bytes() == b.read_bytes()
        size = a.stat().st_size
    return Outcome(12, same, f"two runs byte-identical: {same} ({size} bytes)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 13)])
def test_criterion(criterion):
    out = criterion()
    RESULTS[out.number] = out
    print(out.line())
    assert out.passed, out.line()


def main() -> int:
    outcomes = []
    for criterion in CRITERIA:
        out = criterion()
        print(out.line(), flush=True)
        outcomes.append(out)
    print(f"{sum(o.passed for o in outcomes)}/{len(outcomes)} criteria pass")
    return 0 if all(o.passed for o in outcomes) else 1


if __name__ == "__main__":
    sys.exit(main())
