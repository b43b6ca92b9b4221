"""Byte-deterministic CSV writers: one JSON header line, then long-format rows."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .curve import ForwardSurface
from .flow import FlowPath
from .noise import LevyPath


def fmt(v) -> str:
    """Shortest round-trip decimal; ``nan``/``inf`` spelled out."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, default=_default)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite_or_str(v):
    v = float(v)
    return v if math.isfinite(v) else fmt(v)


def _render(header: dict, columns: list[str], rows) -> str:
    lines = ["# " + canonical_json(header), ",".join(columns)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


def _write(path, header: dict, columns: list[str], rows) -> None:
    Path(path).write_text(_render(header, columns, rows), encoding="utf-8")


def surface_rows(surface: ForwardSurface):
    for i, t in enumerate(surface.t_grid):
        for j, x in enumerate(surface.x_grid):
            blown = bool(surface.blown_up[i, j])
            u = surface.u_values[i, j]
            price = math.nan if blown else math.exp(-u)
            yield [fmt(t), fmt(x), fmt(surface.values[i, j]), fmt(u), fmt(price), "1" if blown else "0"]


def write_surface_csv(surface: ForwardSurface, path, header: dict) -> None:
    """Columns ``t, x, r, u, P, blown_up``; ``nan`` in blown-up rows."""
    meta = dict(header)
    meta["tau_curve"] = [_finite_or_str(v) for v in surface.tau_curve]
    _write(path, meta, ["t", "x", "r", "u", "P", "blown_up"], surface_rows(surface))


def flow_csv(flow: FlowPath, header: dict) -> str:
    """Columns ``t, Y, dY_dx, blown_up``."""
    d = flow.dvalues if flow.dvalues is not None else np.full(len(flow.grid), np.nan)
    rows = (
        [fmt(t), fmt(y), fmt(dy), "1" if b else "0"]
        for t, y, dy, b in zip(flow.grid, flow.values, d, flow.blown_up)
    )
    meta = dict(header, x0=flow.x0, tau=_finite_or_str(flow.tau))
    return _render(meta, ["t", "Y", "dY_dx", "blown_up"], rows)


def write_flow_csv(flow: FlowPath, path, header: dict) -> None:
    Path(path).write_text(flow_csv(flow, header), encoding="utf-8")


def path_csv(path_obj: LevyPath, header: dict) -> str:
    """Gaussian paths: ``t, W_1..W_d`` on the grid. Jump paths: ``tau, eta_1..eta_d``."""
    meta = dict(header, grid={"start": 0.0, "stop": path_obj.horizon, "n": len(path_obj.grid)},
                drift_rate=path_obj.drift_rate,
                seed_record=None if path_obj.seed_record is None else path_obj.seed_record.to_dict())
    d = range(1, path_obj.dim + 1)
    if path_obj.is_gaussian:
        W = path_obj.wiener()
        rows = ([fmt(t)] + [fmt(v) for v in W[k]] for k, t in enumerate(path_obj.grid))
        return _render(meta, ["t"] + [f"W_{i}" for i in d], rows)
    rows = ([fmt(t)] + [fmt(v) for v in m] for t, m in zip(path_obj.jump_times, path_obj.jump_marks))
    return _render(meta, ["tau"] + [f"eta_{i}" for i in d], rows)


def write_path_csv(path_obj: LevyPath, path, header: dict) -> None:
    Path(path).write_text(path_csv(path_obj, header), encoding="utf-8")
