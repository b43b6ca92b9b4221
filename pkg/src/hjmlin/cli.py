"""Command-line interface: ``python -m hjmlin {simulate,price,flow,blowup,verify}``.

Exit codes: 0 success, 1 a verification failed, 2 usage or configuration
error, 3 the requested quantity does not exist (blow-up).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import verify as V
from .blowup import estimate_nonexistence
from .curve import InitialCurve, bond_price, forward_surface, x_grid_for
from .errors import BlowupError, HJMError
from .flow import DEFAULT_SUBSTEPS, flow_derivative, solve_flow
from .noise import (
    AlphaSubordinator,
    AtomicMeasure,
    JumpMartingale,
    SeedRecord,
    StandardWiener,
    is_gaussian,
    regime_name,
    simulate_path,
    spec_from_dict,
    spec_to_dict,
)
from .output import canonical_json, flow_csv, write_flow_csv, write_surface_csv
from .volatility import VolatilityFn

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONEXISTENT = 0, 1, 2, 3

CHECKS = (
    "strong_solution",
    "strong_solution_corrupted",
    "primitive_equation",
    "flow_sde",
    "derivative_formula",
    "poisson_equivalence",
    "drift_identity",
)


class ConfigError(HJMError, ValueError):
    """Invalid scenario configuration; the message starts with the field path."""


@dataclass
class ScenarioConfig:
    noise: object
    g: VolatilityFn
    initial_curve: InitialCurve
    horizon: float
    grid_step: float
    x_max: float
    x_step: float
    seed: int = 0
    n_paths: int = 1000
    substeps: int = DEFAULT_SUBSTEPS
    levels: int = 3
    zero_noise: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        for key in ("noise", "g", "initial_curve", "horizon", "grid_step", "x_max", "x_step"):
            if key not in data:
                raise ConfigError(f"config.{key}: missing")
        noise = _field("noise", lambda: spec_from_dict(data["noise"]))
        g = _field("g", lambda: VolatilityFn(data["g"]["breakpoints"], data["g"]["values"]))
        curve = _field("initial_curve",
                       lambda: InitialCurve(data["initial_curve"]["knots"], data["initial_curve"]["values"]))
        nums = {}
        for key in ("horizon", "grid_step", "x_max", "x_step"):
            nums[key] = _field(key, lambda k=key: float(data[k]))
            if not (math.isfinite(nums[key]) and nums[key] > 0):
                raise ConfigError(f"config.{key}: must be a positive number")
        ints = {}
        for key, default in (("seed", 0), ("n_paths", 1000), ("substeps", DEFAULT_SUBSTEPS), ("levels", 3)):
            ints[key] = _field(key, lambda k=key, d=default: int(data.get(k, d)))
        if not 0 <= ints["seed"] < 2**64:
            raise ConfigError("config.seed: must be an unsigned 64-bit integer")
        for key in ("n_paths", "substeps", "levels"):
            if ints[key] <= 0:
                raise ConfigError(f"config.{key}: must be > 0")
        zero = data.get("zero_noise", False)
        if not isinstance(zero, bool):
            raise ConfigError("config.zero_noise: must be true or false")
        cfg = cls(noise, g, curve, **nums, **ints, zero_noise=zero, raw=data)
        cfg._guards()
        return cfg

    def _guards(self) -> None:
        if self.g.dim != self.noise.dim:
            raise ConfigError("config.g.values: dimension does not match config.noise")
        if is_gaussian(self.noise) and not self.initial_curve.is_strictly_positive:
            raise ConfigError("config.initial_curve.values: the Gaussian regime needs r0 > 0")
        if isinstance(self.noise, AlphaSubordinator) and not self.g.is_constant(1.0):
            raise ConfigError("config.g: the alpha-subordinator regime supports g == 1 only")
        if isinstance(self.noise, JumpMartingale) and isinstance(self.noise.nu, AtomicMeasure):
            worst = np.min(1.0 + self.g.values @ self.noise.nu.marks.T)
            if worst <= 0:
                raise ConfigError("config.g: 1 + <g, eta> must be > 0 for every atom of nu")

    def to_dict(self) -> dict:
        return {
            "noise": spec_to_dict(self.noise),
            "g": self.g.to_dict(),
            "initial_curve": self.initial_curve.to_dict(),
            "horizon": self.horizon,
            "grid_step": self.grid_step,
            "x_max": self.x_max,
            "x_step": self.x_step,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "substeps": self.substeps,
            "levels": self.levels,
            "zero_noise": self.zero_noise,
        }

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    def header(self, command: str) -> dict:
        return {
            "command": command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "regime": regime_name(self.noise),
            "config": self.to_dict(),
        }

    def path(self, stream: int = 0, align: bool = False):
        """Noise path; ``align`` snaps jumps to the coarsest refinement grid."""
        p = simulate_path(self.noise, self.horizon, self.grid_step, SeedRecord(self.seed, stream),
                          zero_noise=self.zero_noise)
        return p.aligned_to(self.grid_step * 2**self.levels) if align else p


def _field(name: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (HJMError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config.{name}: {exc}") from exc


def _set_dotted(data: dict, assignment: str) -> None:
    key, sep, value = assignment.partition("=")
    if not sep:
        raise ConfigError(f"--set {assignment!r}: expected KEY=VALUE")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = data
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = parsed


def load_config(path, seed: int | None = None, overrides=()) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    for item in overrides:
        _set_dotted(data, item)
    if seed is not None:
        data["seed"] = seed
    return ScenarioConfig.from_dict(data)


# ---------------------------------------------------------------------------
# commands


def _emit(obj: dict, out: str | None = None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _surface(cfg: ScenarioConfig, t_grid=None, x_max=None, align: bool = False):
    path = cfg.path(align=align)
    xg = x_grid_for(cfg.x_max if x_max is None else x_max, cfg.x_step)
    return forward_surface(cfg.initial_curve, cfg.g, cfg.noise, path, xg, t_grid, cfg.substeps), path


def cmd_simulate(cfg: ScenarioConfig, out_path: str) -> int:
    surface, _ = _surface(cfg)
    header = cfg.header("simulate")
    write_surface_csv(surface, out_path, header)
    meta = dict(header, csv=str(Path(out_path).name), n_rows=int(surface.values.size),
                n_blown_up=int(surface.blown_up.sum()))
    Path(str(out_path) + ".meta.json").write_text(canonical_json(meta) + "\n", encoding="utf-8")
    _emit({k: v for k, v in meta.items() if k != "config"})
    return EXIT_OK


def cmd_price(cfg: ScenarioConfig, t: float, x: float, out: str | None = None) -> int:
    if not 0 <= t <= cfg.horizon:
        raise ConfigError(f"--t: must lie in [0, horizon = {cfg.horizon}]")
    if x < 0:
        raise ConfigError("--x: must be >= 0")
    base = {k: v for k, v in cfg.header("price").items() if k != "config"}
    base.update(t=t, x=x)
    if x == 0:
        _emit(dict(base, price=1.0), out)
        return EXIT_OK
    t_grid = [0.0] if t == 0 else [0.0, t]
    surface, _ = _surface(cfg, t_grid=t_grid, x_max=x)
    try:
        price = bond_price(surface, t, x)
    except BlowupError as exc:
        _emit(dict(base, price=None, error=f"non-existence: {exc}"), out)
        return EXIT_NONEXISTENT
    _emit(dict(base, price=price), out)
    return EXIT_OK


def cmd_flow(cfg: ScenarioConfig, x0: float, out_path: str | None = None) -> int:
    path = cfg.path()
    flow = flow_derivative(solve_flow(x0, cfg.g, cfg.noise, path, substeps=cfg.substeps), cfg.g, cfg.noise, path)
    header = cfg.header("flow")
    if not out_path:
        sys.stdout.write(flow_csv(flow, header))
        return EXIT_OK
    write_flow_csv(flow, out_path, header)
    summary = {k: v for k, v in header.items() if k != "config"}
    summary.update(x0=x0, tau=None if math.isinf(flow.tau) else flow.tau,
                   Y_final=None if flow.blown_up[-1] else float(flow.values[-1]))
    _emit(summary)
    return EXIT_OK


def cmd_blowup(cfg: ScenarioConfig, K: float, t: float, S: float, threads: int = 1,
               out: str | None = None) -> int:
    est = estimate_nonexistence(K, t, S, cfg.n_paths, cfg.grid_step, cfg.seed, threads=threads)
    res = {k: v for k, v in cfg.header("blowup").items() if k != "config"}
    res.update(est.to_dict())
    _emit(res, out)
    return EXIT_OK


def run_check(cfg: ScenarioConfig, name: str, x0: float = 1.0) -> V.ResidualReport | dict:
    spec, g = cfg.noise, cfg.g
    if name in ("strong_solution", "strong_solution_corrupted", "primitive_equation"):
        surface, path = _surface(cfg, align=True)
        if name == "primitive_equation":
            return V.check_primitive_equation(surface.primitive(), path, spec, g, cfg.levels)
        if name == "strong_solution_corrupted":
            rep = V.check_strong_solution(V.corrupted(surface), None, path, spec, g, cfg.levels)
            rep.check = name
            return rep
        return V.check_strong_solution(surface, None, path, spec, g, cfg.levels)
    if name in ("flow_sde", "derivative_formula"):
        path = cfg.path(align=True)
        flow = solve_flow(x0, g, spec, path, substeps=cfg.substeps)
        if name == "flow_sde":
            return V.check_flow_sde(flow, path, spec, g, cfg.levels)
        return V.check_derivative_formula(flow_derivative(flow, g, spec, path), path, spec, g)
    if name == "poisson_equivalence":
        path = cfg.path()
        xg = x_grid_for(cfg.x_max, cfg.x_step)
        return V.check_poisson_equivalence(cfg.initial_curve, path, xg, g=g)
    if name == "drift_identity":
        if not isinstance(spec, StandardWiener):
            raise ConfigError("config.noise: drift_identity needs the standard Wiener regime")
        surface, _ = _surface(cfg)
        ok = ~surface.blown_up
        diff = V.check_drift_identity(g(0.0)[0], surface.values[ok], surface.u_values[ok])
        return {"check": name, "max_abs": diff, "pass": diff <= 1e-12, "criterion": {"tol": 1e-12}}
    raise ConfigError(f"--checks: unknown check {name!r}; choose from {', '.join(CHECKS)}")


def cmd_verify(cfg: ScenarioConfig, checks: list[str], x0: float = 1.0, out: str | None = None) -> int:
    if not checks:
        raise ConfigError("--checks: empty check list")
    reports = []
    for name in checks:
        rep = run_check(cfg, name, x0)
        reports.append(rep.to_dict() if isinstance(rep, V.ResidualReport) else rep)
    result = {k: v for k, v in cfg.header("verify").items() if k != "config"}
    result.update(checks=_json_safe(reports), passed=all(r["pass"] for r in reports))
    _emit(result, out)
    return EXIT_OK if result["passed"] else EXIT_FAIL


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON file")
    common.add_argument("--seed", type=int, help="override config.seed")
    common.add_argument("--out", help="output file")
    common.add_argument("--threads", type=int, default=1, help="worker cap for Monte Carlo")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (dotted path, JSON value)")

    p = argparse.ArgumentParser(prog="hjmlin", description="HJM forward-rate models with linear volatility")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="forward-rate surface CSV")
    sp = sub.add_parser("price", parents=[common], help="zero-coupon bond price P(t, x)")
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--x", type=float, required=True)
    sp = sub.add_parser("flow", parents=[common], help="flow Y(t, x0) CSV")
    sp.add_argument("--x0", type=float, required=True)
    sp = sub.add_parser("blowup", parents=[common], help="non-existence probability estimate")
    sp.add_argument("--K", type=float, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--S", type=float, required=True)
    sp = sub.add_parser("verify", parents=[common], help="residual checks")
    sp.add_argument("--checks", required=True, help=f"comma-separated subset of: {', '.join(CHECKS)}")
    sp.add_argument("--x0", type=float, default=1.0, help="initial value for flow checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads <= 0:
            raise ConfigError("--threads: must be > 0")
        cfg = load_config(args.config, args.seed, args.set)
        if args.command == "simulate":
            if not args.out:
                raise ConfigError("--out: required for simulate")
            return cmd_simulate(cfg, args.out)
        if args.command == "price":
            return cmd_price(cfg, args.t, args.x, args.out)
        if args.command == "flow":
            return cmd_flow(cfg, args.x0, args.out)
        if args.command == "blowup":
            return cmd_blowup(cfg, args.K, args.t, args.S, args.threads, args.out)
        checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        return cmd_verify(cfg, checks, args.x0, args.out)
    except HJMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
