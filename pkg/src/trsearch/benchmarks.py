"""Built-in synthetic benchmark problems."""

from __future__ import annotations

import tomli_w

from .problem import ProblemSpec, problem_from_dict

OPAMP_GRIDS = {
    "w1": {"min": 0.5e-6, "max": 50e-6, "points": 100, "spacing": "log"},
    "w2": {"min": 0.5e-6, "max": 50e-6, "points": 100, "spacing": "log"},
    "l1": {"min": 0.05e-6, "max": 1e-6, "points": 100, "spacing": "log"},
    "l2": {"min": 0.05e-6, "max": 1e-6, "points": 100, "spacing": "log"},
    "cc": {"min": 0.1e-12, "max": 10e-12, "points": 100, "spacing": "log"},
    "ib": {"min": 1e-6, "max": 1e-3, "points": 100, "spacing": "log"},
}

OPAMP_SPECS = [
    {"measurement": "gain_db", "direction": "at_least", "threshold": 85.0},
    {"measurement": "ugbw_hz", "direction": "at_least", "threshold": 1e8},
    {"measurement": "pm_deg", "direction": "at_least", "threshold": 60.0},
    {"measurement": "power_w", "direction": "at_most", "threshold": 3e-4},
]

PVT_CORNERS = tuple(f"{p}_{v}" for p in ("ss", "tt", "ff") for v in ("lv", "nv", "hv"))
HARDEST_CORNER = "ss_hv"


def opamp_dict(corners=("tt_nv",), specs=OPAMP_SPECS, environment=None, **search) -> dict:
    env = {"kind": "synthetic_opamp", **(environment or {})}
    return {
        "variables": {k: dict(v) for k, v in OPAMP_GRIDS.items()},
        "corners": {c: {"table": c} for c in corners},
        "constraints": {c: [dict(s) for s in specs] for c in corners},
        "search": dict(search),
        "environment": env,
    }


def opamp_problem(corners=("tt_nv",), specs=OPAMP_SPECS, environment=None, **search) -> ProblemSpec:
    """Two-stage op-amp sizing on six 100-point log grids (10^12 combinations)."""
    return problem_from_dict(opamp_dict(corners, specs, environment, **search))


def opamp_pvt_dict(**search) -> dict:
    search.setdefault("hardest_corner", HARDEST_CORNER)
    return opamp_dict(PVT_CORNERS, **search)


def opamp_pvt_problem(**search) -> ProblemSpec:
    """Same op-amp and specs, signed off on all nine process/supply corners."""
    return problem_from_dict(opamp_pvt_dict(**search))


def ported_opamp_dict(scale: float = 0.8, **search) -> dict:
    return opamp_dict(environment={"kp_scale": scale}, **search)


def ported_opamp_problem(scale: float = 0.8, **search) -> ProblemSpec:
    """The single-corner op-amp on a 'new process': every corner's kp scaled by ``scale``."""
    return problem_from_dict(ported_opamp_dict(scale, **search))


def sphere_dict(n_vars: int = 3, points: int = 21, tolerance: float = 0.01, **search) -> dict:
    return {
        "variables": {f"x{i}": {"min": 0.0, "max": 1.0, "points": points} for i in range(n_vars)},
        "corners": {"nominal": {}},
        "constraints": {
            "nominal": [{"measurement": "value", "direction": "at_least", "threshold": -tolerance}]
        },
        "search": dict(search),
        "environment": {"kind": "toy_landscape", "function": "sphere"},
    }


def sphere_problem(n_vars: int = 3, points: int = 21, tolerance: float = 0.01, **search) -> ProblemSpec:
    return problem_from_dict(sphere_dict(n_vars, points, tolerance, **search))


BENCHMARKS = {
    "opamp": opamp_dict,
    "opamp_pvt": opamp_pvt_dict,
    "opamp_ported": ported_opamp_dict,
    "sphere": sphere_dict,
}


def benchmark_config(name: str, **search) -> str:
    """TOML text of a built-in benchmark, with compact range tables."""
    return tomli_w.dumps(BENCHMARKS[name](**search))


# On the OPAMP_GRIDS: w1 = w2 = 30.4 um, l1 = l2 = 0.407 um, cc = 1.02 pF, ib = 1 mA.
OPAMP_REFERENCE_SIZING = (84, 84, 70, 70, 50, 99)
