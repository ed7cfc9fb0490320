"""Ground-truth evaluators mapping (sizing, corner) to measurements.

Three kinds are provided: a closed-form two-stage op-amp, toy landscapes for
sanity checks, and an adapter that renders a netlist template, runs an
external simulator and scrapes measurements out of its output.
"""

from __future__ import annotations

import math
import os
import re
import shlex
import subprocess
import tempfile
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .problem import ConfigError, Corner, ProblemSpec, check_sizing, denormalize, normalize

OPAMP_MEASUREMENTS = ("gain_db", "ugbw_hz", "pm_deg", "power_w")
OPAMP_VARIABLES = ("w1", "w2", "l1", "l2", "cc", "ib")

# Nominal device constants: kp in sqrt(A/V^2) so that gm = kp*sqrt(2*(W/L)*I),
# lambda in 1/V, load capacitance in F, supply in V.
KP_NOM = 0.0173
LAMBDA_NOM = 0.3
C_LOAD_NOM = 2e-12
VDD_NOM = 1.0

_PROCESS = {"ss": (0.85, 1.15), "tt": (1.0, 1.0), "ff": (1.15, 0.85)}  # (kp, lambda) factors
_SUPPLY = {"lv": (0.9, 0.9), "nv": (1.0, 1.0), "hv": (1.1, 1.1)}  # (vdd, c_load) factors

OPAMP_CORNERS: dict[str, dict[str, float]] = {
    f"{p}_{v}": {
        "kp": KP_NOM * kf,
        "lam": LAMBDA_NOM * lf,
        "c_load": C_LOAD_NOM * cf,
        "vdd": VDD_NOM * vf,
    }
    for p, (kf, lf) in _PROCESS.items()
    for v, (vf, cf) in _SUPPLY.items()
}
"""Corner table for the synthetic op-amp; ``ss_hv`` is worst on every measurement."""


class EvaluationError(RuntimeError):
    """A single evaluation failed; carries diagnostics, never a made-up value."""


def declared_measurements(env_cfg: Mapping[str, Any]) -> tuple[str, ...]:
    kind = env_cfg.get("kind")
    if kind == "synthetic_opamp":
        return OPAMP_MEASUREMENTS
    if kind == "toy_landscape":
        return ("value",)
    if kind == "external":
        patterns = env_cfg.get("patterns")
        if not isinstance(patterns, dict) or not patterns:
            raise ConfigError("environment.patterns must map measurement names to regexes")
        return tuple(patterns)
    raise ConfigError(f"unknown environment kind {kind!r}")


class Environment:
    """Caching, counting wrapper around ``simulate``.

    Every distinct (sizing, corner) pair is simulated at most once per
    instance; the per-corner counters therefore equal the number of distinct
    pairs queried. Failed evaluations are cached too.
    """

    kind = "base"

    def __init__(self, problem: ProblemSpec, max_parallel: int = 1):
        self.problem = problem
        self.measurements = declared_measurements(problem.environment)
        self.max_parallel = max(1, int(max_parallel))
        self.counts = {c.name: 0 for c in problem.corners}
        self._cache: dict[tuple, Future] = {}
        self._lock = threading.Lock()

    @property
    def total_evaluations(self) -> int:
        return sum(self.counts.values())

    def is_cached(self, s: Sequence[int], corner: Corner | str) -> bool:
        name = corner if isinstance(corner, str) else corner.name
        return (tuple(s), name) in self._cache

    def simulate(self, s: tuple, corner: Corner) -> dict[str, float]:
        raise NotImplementedError

    def _lookup(self, s, corner: Corner) -> tuple[Future, bool]:
        key = (tuple(int(i) for i in s), corner.name)
        with self._lock:
            fut = self._cache.get(key)
            if fut is not None:
                return fut, False
            fut = Future()
            self._cache[key] = fut
            self.counts[corner.name] += 1
            return fut, True

    def _run(self, fut: Future, s: tuple, corner: Corner):
        try:
            result = self.simulate(s, corner)
            result = self._check(result)
        except EvaluationError as exc:
            fut.set_exception(exc)
        except Exception as exc:  # simulator crashed in an unexpected way
            fut.set_exception(EvaluationError(f"{type(exc).__name__}: {exc}"))
        else:
            fut.set_result(result)

    def _check(self, result: Mapping[str, float]) -> dict[str, float]:
        missing = [m for m in self.measurements if m not in result]
        if missing:
            raise EvaluationError(f"missing measurements {missing}")
        out = {}
        for m in self.measurements:
            v = float(result[m])
            if not math.isfinite(v):
                raise EvaluationError(f"non-finite value for {m!r}: {v}")
            out[m] = v
        return out

    def evaluate(self, s: Sequence[int], corner: Corner) -> dict[str, float]:
        s = check_sizing(s, self.problem)
        fut, owner = self._lookup(s, corner)
        if owner:
            self._run(fut, s, corner)
        return dict(fut.result())

    def evaluate_batch(self, ss: Sequence[Sequence[int]], cs: Sequence[Corner]) -> list:
        """Evaluate pairs ``(ss[k], cs[k])``; results come back in input order.

        A failed item is returned as its :class:`EvaluationError` instance in
        place of a measurement dict, so one failure never aborts the others.
        """
        if len(ss) != len(cs):
            raise ValueError("sizings and corners must have equal length")
        pending = []
        futs = []
        for s, c in zip(ss, cs):
            s = check_sizing(s, self.problem)
            fut, owner = self._lookup(s, c)
            futs.append(fut)
            if owner:
                pending.append((fut, s, c))
        if self.max_parallel > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self.max_parallel) as pool:
                list(pool.map(lambda job: self._run(*job), pending))
        else:
            for job in pending:
                self._run(*job)
        out = []
        for fut in futs:
            exc = fut.exception()
            out.append(exc if exc is not None else dict(fut.result()))
        return out


class SyntheticOpamp(Environment):
    """Closed-form two-stage op-amp behavioral model.

    gm_k = kp*sqrt(2*(w_k/l_k)*ib), ro_k = 1/(lam*ib)
    gain_db = 20*log10(gm1*ro1*gm2*ro2), ugbw_hz = gm1/(2*pi*cc)
    pm_deg = 90 - atan(ugbw_hz / (gm2/(2*pi*c_load))) in degrees
    power_w = vdd*3*ib

    Corner parameters come from :data:`OPAMP_CORNERS` via ``table = "<name>"``
    (default ``tt_nv``) and may be overridden per corner with explicit
    ``kp``, ``lam``, ``c_load`` or ``vdd`` keys. Environment-level
    ``kp_scale``, ``lam_scale``, ``c_load_scale`` and ``vdd_scale`` multiply
    every corner, which is how a ported process is modelled.
    """

    kind = "synthetic_opamp"

    def __init__(self, problem: ProblemSpec, max_parallel: int = 1):
        super().__init__(problem, max_parallel)
        names = tuple(v.name for v in problem.variables)
        if sorted(names) != sorted(OPAMP_VARIABLES):
            raise ConfigError(f"synthetic_opamp needs variables {OPAMP_VARIABLES}, got {names}")
        self._order = [names.index(n) for n in OPAMP_VARIABLES]
        env = problem.environment
        self._scales = {k: float(env.get(f"{k}_scale", 1.0)) for k in ("kp", "lam", "c_load", "vdd")}
        self._corner_params = {c.name: self.corner_params(c) for c in problem.corners}

    def corner_params(self, corner: Corner) -> dict[str, float]:
        table = corner.params.get("table", "tt_nv")
        if table not in OPAMP_CORNERS:
            raise ConfigError(f"corner {corner.name!r}: unknown op-amp table {table!r}")
        base = dict(OPAMP_CORNERS[table])
        for k in base:
            if k in corner.params:
                base[k] = float(corner.params[k])
        return {k: base[k] * self._scales[k] for k in base}

    def simulate(self, s, corner):
        raw = self.problem.raw_values(s)
        w1, w2, l1, l2, cc, ib = (raw[i] for i in self._order)
        return opamp_measurements(w1, w2, l1, l2, cc, ib, **self._corner_params[corner.name])


def opamp_measurements(w1, w2, l1, l2, cc, ib, *, kp, lam, c_load, vdd) -> dict[str, float]:
    gm1 = kp * math.sqrt(2.0 * (w1 / l1) * ib)
    gm2 = kp * math.sqrt(2.0 * (w2 / l2) * ib)
    ro = 1.0 / (lam * ib)
    ugbw = gm1 / (2.0 * math.pi * cc)
    p2 = gm2 / (2.0 * math.pi * c_load)
    return {
        "gain_db": 20.0 * math.log10(gm1 * ro * gm2 * ro),
        "ugbw_hz": ugbw,
        "pm_deg": 90.0 - math.degrees(math.atan(ugbw / p2)),
        "power_w": vdd * 3.0 * ib,
    }


class ToyLandscape(Environment):
    """Cheap analytic landscapes over the unit cube, single ``value`` output.

    ``sphere``: value = -||u - u*||^2 where u* is the grid point nearest
    ``center`` (unit coordinates, default the cube middle), so the optimum is
    exactly 0. A corner may shift the optimum with an ``offset`` parameter.
    """

    kind = "toy_landscape"
    FUNCTIONS = ("sphere",)

    def __init__(self, problem: ProblemSpec, max_parallel: int = 1):
        super().__init__(problem, max_parallel)
        env = problem.environment
        self.function = env.get("function", "sphere")
        if self.function not in self.FUNCTIONS:
            raise ConfigError(f"toy_landscape: unknown function {self.function!r}")
        n = len(problem.variables)
        center = np.broadcast_to(np.asarray(env.get("center", 0.5), dtype=float), (n,))
        self._optimum = {}
        for c in problem.corners:
            shifted = center + np.broadcast_to(np.asarray(c.params.get("offset", 0.0), float), (n,))
            self._optimum[c.name] = normalize(denormalize(np.clip(shifted, 0, 1), problem), problem)

    def simulate(self, s, corner):
        u = normalize(s, self.problem)
        d = u - self._optimum[corner.name]
        return {"value": -float(np.dot(d, d))}


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def render_template(text: str, mapping: Mapping[str, Any]) -> str:
    """Substitute ``{name}`` placeholders that appear in ``mapping``; others are left alone."""

    def sub(m):
        key = m.group(1)
        return str(mapping[key]) if key in mapping else m.group(0)

    return _PLACEHOLDER.sub(sub, text)


class ExternalSimulator(Environment):
    """Template-substitute, launch, regex-scrape.

    Settings (``[environment]``): ``command`` (string or list, may use the
    same placeholders plus ``{netlist}``), ``template_path``,
    ``output_source`` (``stdout`` or ``file:<path>`` relative to the run
    directory), ``patterns`` (measurement -> regex; a group named after the
    measurement is used if present, else group 1), ``timeout_s`` (300) and
    ``max_parallel`` (1, the number of simulator licences).
    """

    kind = "external"

    def __init__(self, problem: ProblemSpec, base_dir: str | os.PathLike | None = None):
        env = problem.environment
        super().__init__(problem, int(env.get("max_parallel", 1)))
        if "command" not in env:
            raise ConfigError("external environment needs a command")
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        self.command = env["command"]
        self.template_path = None
        self.template = None
        if env.get("template_path"):
            self.template_path = (base / env["template_path"]).resolve()
            try:
                self.template = self.template_path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read template {self.template_path}: {exc}") from exc
        self.output_source = env.get("output_source", "stdout")
        if self.output_source != "stdout" and not self.output_source.startswith("file:"):
            raise ConfigError("output_source must be 'stdout' or 'file:<path>'")
        self.timeout_s = float(env.get("timeout_s", 300.0))
        try:
            self.patterns = {m: re.compile(p) for m, p in env["patterns"].items()}
        except re.error as exc:
            raise ConfigError(f"bad measurement pattern: {exc}") from exc
        self._slots = threading.BoundedSemaphore(self.max_parallel)

    def _mapping(self, s, corner: Corner) -> dict[str, Any]:
        mapping = {k: v for k, v in corner.params.items()}
        mapping["corner"] = corner.name
        for v, x in zip(self.problem.variables, self.problem.raw_values(s)):
            mapping[v.name] = repr(x)
        return mapping

    def parse_output(self, text: str) -> dict[str, float]:
        out = {}
        for m, pat in self.patterns.items():
            hit = pat.search(text)
            if hit is None:
                raise EvaluationError(f"measurement {m!r}: pattern {pat.pattern!r} not found in output")
            raw = hit.group(m) if m in pat.groupindex else hit.group(1 if pat.groups else 0)
            try:
                out[m] = float(raw)
            except ValueError as exc:
                raise EvaluationError(f"measurement {m!r}: cannot parse {raw!r}") from exc
        return out

    def simulate(self, s, corner):
        mapping = self._mapping(s, corner)
        with self._slots, tempfile.TemporaryDirectory(prefix="trsearch-") as tmp:
            if self.template is not None:
                netlist = Path(tmp) / self.template_path.name
                netlist.write_text(render_template(self.template, mapping))
                mapping["netlist"] = str(netlist)
            if isinstance(self.command, str):
                argv = shlex.split(render_template(self.command, mapping))
            else:
                argv = [render_template(str(a), mapping) for a in self.command]
            try:
                proc = subprocess.run(
                    argv, cwd=tmp, capture_output=True, text=True, timeout=self.timeout_s
                )
            except subprocess.TimeoutExpired as exc:
                raise EvaluationError(f"simulator timed out after {self.timeout_s} s") from exc
            except OSError as exc:
                raise EvaluationError(f"cannot launch simulator {argv[0]!r}: {exc}") from exc
            if proc.returncode != 0:
                tail = (proc.stderr or proc.stdout)[-2000:]
                raise EvaluationError(f"simulator exited with code {proc.returncode}: {tail}")
            if self.output_source == "stdout":
                text = proc.stdout
            else:
                path = Path(tmp) / self.output_source[len("file:"):]
                try:
                    text = path.read_text()
                except OSError as exc:
                    raise EvaluationError(f"cannot read simulator output {path}: {exc}") from exc
        return self.parse_output(text)


def build_environment(problem: ProblemSpec, base_dir=None) -> Environment:
    kind = problem.environment.get("kind")
    if kind == "synthetic_opamp":
        return SyntheticOpamp(problem)
    if kind == "toy_landscape":
        return ToyLandscape(problem)
    if kind == "external":
        return ExternalSimulator(problem, base_dir=base_dir)
    raise ConfigError(f"unknown environment kind {kind!r}")
