"""Flat key-value config files for vehicle and envelope parameters.

Format: one ``key = value`` per line, ``#`` comments, values are floats or
whitespace-separated float lists.  Scenario files are YAML and live in
:mod:`apexplan.harness`.
"""

from __future__ import annotations

from pathlib import Path

from .dynamics import AxleTire, TireParams, VehicleParams


def read_kv(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path, items: dict[str, str], header: str = ""):
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{k} = {v}" for k, v in items.items())
    Path(path).write_text("\n".join(lines) + "\n")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split()]


def _axle(kv: dict[str, str], prefix: str) -> AxleTire:
    return AxleTire(**{name: float(kv[f"{prefix}.{name}"])
                       for name in ("bx", "cx", "dx", "ex", "by", "cy", "dy", "ey")})


def load_vehicle_params(path) -> VehicleParams:
    kv = read_kv(path)
    tire = TireParams(front=_axle(kv, "tire.front"), rear=_axle(kv, "tire.rear"))
    scalar = {name: float(kv[name]) for name in (
        "m_total", "i_x", "i_y", "i_z", "i_r", "l_f", "l_r", "l_w", "r_w",
        "k_s", "d_s", "h_com", "mu", "drag_coeff", "delta_max",
        "delta_rate_max", "torque_min", "torque_max")}
    if "eps_v" in kv:
        scalar["eps_v"] = float(kv["eps_v"])
    if "delta_tau" in kv:
        scalar["delta_tau"] = float(kv["delta_tau"])
    return VehicleParams(tire=tire, **scalar)
