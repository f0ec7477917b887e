"""Scenario files, orchestration and deterministic result files.

A scenario is a small INI-style text file::

    [scenario]
    mode = steady          # simulate | steady | sweep | multicomp | oracle | classify

    [kernel]
    kind = constant
    value = 2

    [source]
    h = 1

    [solver]
    nmax = 4096

Every key has a documented default (see ``SECTIONS``) except the ones each
mode requires (``REQUIRED``).  Numbers may be written as fractions (``1/3``).
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .integrator import StiffnessError
from .kernels import EnvelopeParams, KernelSpec, classify_regime, default_envelope
from .multicomp import (
    MultiSource,
    MultiState,
    analytic_stationary,
    analytic_time_solution,
    integrate_multi,
)
from .onecomp import SolverConfig, SourceSpec, StateVector, integrate, mass_flux, moment
from .oracles import generating_fn, onecomp_stationary_array, onecomp_time_array, total_number
from .stationary import SweepThresholds, invariant_region_bound, solve_stationary, truncation_sweep

MODES = ("simulate", "steady", "sweep", "multicomp", "oracle", "classify")
FORMATS = ("csv", "json")
ORACLE_KINDS = ("onecomp_time", "total_number", "generating_fn", "onecomp_stationary")
MULTI_MODES = ("solve", "oracle", "stationary-oracle")
LEDGER_RTOL = 1e-9


class ConfigError(ValueError):
    """Invalid scenario text or values."""


class ConvergenceError(RuntimeError):
    """A numerical run finished without meeting its convergence criterion."""


# section -> key -> (type, default); None as default means "not set"
SECTIONS: dict[str, dict[str, tuple[str, Any]]] = {
    "scenario": {"name": ("str", "run"), "mode": ("str", None)},
    "kernel": {
        "kind": ("str", None),
        "value": ("float", 2.0),
        "gamma": ("float", None),
        "lambda": ("float", None),
        "c": ("float", 1.0),
        "c1": ("float", None),
        "c2": ("float", None),
    },
    "source": {"h": ("float", 0.0), "rates": ("ratelist", [])},
    "solver": {
        "nmax": ("int", 4096),
        "r_star": ("int", None),
        "dt": ("float", 1e-3),
        "tmax": ("float", 1.0),
        "tol_step": ("float", 1e-10),
        "cutoff_mode": ("str", "hard_drop"),
        "conv": ("str", "auto"),
        "initial": ("str", "monomers"),
        "checkpoints": ("floatlist", []),
        "flux_cuts": ("intlist", []),
    },
    "steady": {"tol": ("float", 1e-10), "t_cap": ("float", 1e7), "method": ("str", "integrate")},
    "sweep": {
        "truncations": ("intlist", [1024, 2048, 4096, 8192]),
        "method": ("str", "newton"),
        "stable_rel": ("float", 0.01),
        "diverge_rel": ("float", 0.10),
        "tail_margin": ("float", 0.05),
    },
    "multicomp": {
        "dim": ("int", 2),
        "cap": ("int", 64),
        "tmax": ("float", 1.0),
        "h": ("float", 0.0),
        "mode": ("str", "solve"),
        "heatmap": ("str", ""),
    },
    "oracle": {
        "kind": ("str", "onecomp_time"),
        "kmax": ("int", 10),
        "t": ("floatlist", [1.0]),
        "h": ("float", 1.0),
        "z": ("floatlist", [0.5]),
    },
    "output": {"path": ("str", ""), "format": ("str", "csv")},
}

REQUIRED = {
    "simulate": [("kernel", "kind"), ("solver", "nmax"), ("solver", "tmax")],
    "steady": [("kernel", "kind"), ("solver", "nmax")],
    "sweep": [("kernel", "kind")],
    "multicomp": [("multicomp", "dim"), ("multicomp", "cap")],
    "oracle": [],
    "classify": [],
}

_TYPE_NAMES = {
    "str": "a string",
    "int": "an integer",
    "float": "a number",
    "intlist": "a comma-separated list of integers",
    "floatlist": "a comma-separated list of numbers",
    "ratelist": "a comma-separated list of size:rate pairs",
}


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return float(Fraction(text))


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        raw = raw[1:-1]
        if kind != "str":
            raise ValueError(raw)
    if kind == "str":
        return raw
    if kind == "int":
        v = _to_float(raw)
        if not float(v).is_integer():
            raise ValueError(raw)
        return int(v)
    if kind == "float":
        return _to_float(raw)
    items = [p.strip() for p in raw.split(",") if p.strip()]
    if kind == "ratelist":
        out = []
        for p in items:
            k, sep, r = p.partition(":")
            if not sep:
                raise ValueError(p)
            out.append((_convert("int", k), _to_float(r)))
        return out
    if kind == "intlist":
        return [_convert("int", p) for p in items]
    return [_to_float(p) for p in items]


def _render(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "floatlist":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "intlist":
        return ", ".join(str(int(v)) for v in value)
    if kind == "ratelist":
        return ", ".join(f"{int(k)}:{float(r)!r}" for k, r in value)
    return str(value)


@dataclass(frozen=True)
class Scenario:
    """Validated run description; ``values`` holds every key with defaults filled."""

    mode: str
    values: dict = field(compare=True, hash=False)

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def name(self) -> str:
        return self.get("scenario", "name")

    @property
    def output_path(self) -> str:
        return self.get("output", "path")

    @property
    def output_format(self) -> str:
        return self.get("output", "format")

    def kernel(self) -> KernelSpec | None:
        return _build_kernel(self.values["kernel"])

    def envelope(self) -> EnvelopeParams:
        return _build_envelope(self.values["kernel"])

    def source(self) -> SourceSpec:
        """``rates`` entries plus ``h`` at size 1."""
        src = self.values["source"]
        entries = list(src["rates"])
        if src["h"] > 0:
            entries.append((1, src["h"]))
        return SourceSpec(tuple(entries))

    def solver(self, **over) -> SolverConfig:
        s = self.values["solver"]
        nmax = over.pop("nmax", s["nmax"])
        return SolverConfig(
            nmax=nmax,
            r_star=over.pop("r_star", s["r_star"]),
            dt=s["dt"],
            t_end=over.pop("t_end", s["tmax"]),
            tol_step=s["tol_step"],
            cutoff_mode=s["cutoff_mode"],
            conv=s["conv"],
        )


def _build_kernel(k: dict) -> KernelSpec | None:
    kind = k["kind"]
    if kind is None:
        return None
    if kind.replace("-", "_") == "power_law":
        return KernelSpec.power_law(k["gamma"], k["lambda"], k["c"])
    return KernelSpec.from_name(kind, value=k["value"])


def _build_envelope(k: dict) -> EnvelopeParams:
    if k["gamma"] is not None and k["lambda"] is not None:
        c1 = k["c1"] if k["c1"] is not None else 1.0
        c2 = k["c2"] if k["c2"] is not None else max(c1, 1.0)
        return EnvelopeParams(c1, c2, k["gamma"], k["lambda"])
    if k["kind"] is None:
        raise ConfigError("[kernel] needs either kind or both gamma and lambda")
    kind = k["kind"].replace("-", "_")
    if kind == "constant":
        return KernelSpec.constant(k["value"]).envelope
    return default_envelope(kind)


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return {sec: dict(cp[sec]) for sec in cp.sections()}


def scenario_from_sections(raw: dict[str, dict[str, str]], mode: str | None = None) -> Scenario:
    values: dict[str, dict[str, Any]] = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SECTIONS.items()}
    given: set[tuple[str, str]] = set()
    for sec, items in raw.items():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]; known sections: {', '.join(SECTIONS)}")
        for key, text in items.items():
            if key not in SECTIONS[sec]:
                raise ConfigError(f"unknown key '{key}' in section [{sec}]; known keys: {', '.join(SECTIONS[sec])}")
            kind = SECTIONS[sec][key][0]
            try:
                values[sec][key] = _convert(kind, text)
            except (ValueError, ZeroDivisionError):
                raise ConfigError(
                    f"[{sec}] {key} = {text!r}: expected {_TYPE_NAMES[kind]}"
                ) from None
            given.add((sec, key))

    cfg_mode = values["scenario"]["mode"]
    if mode is not None and cfg_mode is not None and cfg_mode != mode:
        raise ConfigError(f"config declares mode '{cfg_mode}' but '{mode}' was requested")
    mode = mode or cfg_mode
    if mode is None:
        raise ConfigError(f"[scenario] mode is required; one of {', '.join(MODES)}")
    if mode not in MODES:
        raise ConfigError(f"[scenario] mode = {mode!r}: expected one of {', '.join(MODES)}")
    values["scenario"]["mode"] = mode

    missing = [f"[{s}] {k}" for s, k in REQUIRED[mode] if (s, k) not in given]
    if mode == "classify" and values["kernel"]["kind"] is None and (
        values["kernel"]["gamma"] is None or values["kernel"]["lambda"] is None
    ):
        missing.append("[kernel] kind, or [kernel] gamma and lambda")
    if missing:
        need = ", ".join(f"[{s}] {k}" for s, k in REQUIRED[mode]) or "kernel kind or gamma/lambda"
        raise ConfigError(f"mode '{mode}' is missing {', '.join(missing)} (requires: {need})")

    _validate(mode, values)
    return Scenario(mode=mode, values=values)


def _validate(mode: str, v: dict) -> None:
    def check(cond, msg):
        if not cond:
            raise ConfigError(msg)

    fmt = v["output"]["format"]
    check(fmt in FORMATS, f"[output] format = {fmt!r}: expected one of {', '.join(FORMATS)}")
    if v["kernel"]["kind"] is not None or mode in ("simulate", "steady", "sweep"):
        try:
            _build_kernel(v["kernel"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[kernel] {exc}") from None
    if mode == "classify":
        try:
            _build_envelope(v["kernel"])
        except ValueError as exc:
            raise ConfigError(f"[kernel] {exc}") from None
    if mode in ("simulate", "steady", "sweep"):
        src = v["source"]
        check(src["h"] >= 0, "[source] h must be >= 0")
        try:
            Scenario(mode, v).source().vector(v["solver"]["nmax"])
        except ValueError as exc:
            raise ConfigError(f"[source] {exc}") from None
        cuts = v["solver"]["flux_cuts"]
        check(all(1 <= r < v["solver"]["nmax"] for r in cuts), "[solver] flux_cuts must lie in [1, nmax)")
        try:
            Scenario(mode, v).solver()
        except ValueError as exc:
            raise ConfigError(f"[solver] {exc}") from None
        check(v["solver"]["initial"] in ("monomers", "empty"), "[solver] initial must be 'monomers' or 'empty'")
    if mode in ("steady", "sweep"):
        check(Scenario(mode, v).source().total_rate > 0, f"mode '{mode}' needs a source: [source] h or rates")
        check(v["steady"]["method"] in ("integrate", "newton"), "[steady] method must be 'integrate' or 'newton'")
        check(v["sweep"]["method"] in ("integrate", "newton"), "[sweep] method must be 'integrate' or 'newton'")
    if mode == "sweep":
        tr = v["sweep"]["truncations"]
        check(len(tr) >= 3 and all(b > a for a, b in zip(tr, tr[1:])),
              "[sweep] truncations needs >= 3 strictly increasing values")
    if mode == "multicomp":
        m = v["multicomp"]
        check(m["dim"] >= 1 and m["cap"] >= 1, "[multicomp] dim and cap must be >= 1")
        check(m["mode"] in MULTI_MODES, f"[multicomp] mode must be one of {', '.join(MULTI_MODES)}")
        check(m["mode"] != "stationary-oracle" or m["h"] > 0, "[multicomp] stationary-oracle needs h > 0")
        check(m["mode"] != "solve" or m["dim"] <= 3, "[multicomp] solve supports dim <= 3")
        check(not m["heatmap"] or m["dim"] == 2, "[multicomp] heatmap needs dim = 2")
    if mode == "oracle":
        o = v["oracle"]
        check(o["kind"] in ORACLE_KINDS, f"[oracle] kind must be one of {', '.join(ORACLE_KINDS)}")
        check(o["kmax"] >= 1, "[oracle] kmax must be >= 1")
        check(all(t >= 0 for t in o["t"]), "[oracle] t values must be >= 0")
        check(o["kind"] != "onecomp_stationary" or o["h"] > 0, "[oracle] h must be > 0")


def parse_config(text: str, mode: str | None = None) -> Scenario:
    """Parse and validate scenario text; ``mode`` overrides a missing [scenario] mode."""
    return scenario_from_sections(parse_sections(text), mode=mode)


def serialize(s: Scenario) -> str:
    """Scenario text with every key written out (unset keys omitted)."""
    lines = []
    for sec, keys in SECTIONS.items():
        lines.append(f"[{sec}]")
        for key, (kind, _) in keys.items():
            val = s.values[sec][key]
            if val is None:
                continue
            if kind == "str" and val == "":
                lines.append(f'{key} = ""')
            else:
                lines.append(f"{key} = {_render(kind, val)}")
        lines.append("")
    return "\n".join(lines)


def scenario_hash(s: Scenario) -> str:
    return hashlib.sha256(serialize(s).encode()).hexdigest()


# ---------------------------------------------------------------- output


def fmt(x) -> str:
    """Fixed 17-significant-digit rendering (round-trips doubles)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    """JSON with floats in fixed 17-significant-digit form."""
    return _dump(_jsonable(obj), 0) + "\n"


def _dump(o, depth: int) -> str:
    pad = " " * depth
    if isinstance(o, dict):
        if not o:
            return "{}"
        inner = ",\n".join(f"{pad} {json.dumps(k)}: {_dump(v, depth + 1)}" for k, v in o.items())
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_dump(v, depth) for v in o) + "]"
        inner = ",\n".join(f"{pad} {_dump(v, depth + 1)}" for v in o)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(o, float):
        return fmt(o)
    return json.dumps(o)


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def emit_heatmap(state: MultiState, path: str | os.PathLike) -> None:
    """CSV ``a1,a2,n`` over the dense grid ``0 <= a1, a2 < cap`` (cap**2 rows).

    Grid points with ``|alpha| > cap`` or ``alpha = 0`` are written as zeros.
    """
    if state.d != 2:
        raise ValueError(f"heatmap output supports d = 2 only, got d = {state.d}")
    rows = []
    for a1 in range(state.cap):
        for a2 in range(state.cap):
            v = state[(a1, a2)] if a1 + a2 >= 1 else 0.0
            rows.append((a1, a2, v))
    write_atomic(path, csv_text(["a1", "a2", "n"], rows))


# ------------------------------------------------------------ orchestration


@dataclass
class RunManifest:
    scenario_hash: str
    version: str
    mode: str
    wall_time: float
    ledger: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def _ledger(initial: StateVector, final: StateVector, source: SourceSpec) -> dict:
    m0 = moment(initial, 1.0)
    injected = source.mass_rate * (final.t - initial.t)
    inside = moment(final, 1.0)
    lhs = inside + final.leak_mass + final.clip_mass
    rhs_ = m0 + initial.leak_mass + initial.clip_mass + injected
    err = abs(lhs - rhs_) / max(abs(rhs_), 1e-300)
    return {
        "mass_initial": m0,
        "mass_injected": injected,
        "mass_inside": inside,
        "mass_leaked": final.leak_mass,
        "mass_clipped": final.clip_mass,
        "relative_error": err,
        "balanced": err <= LEDGER_RTOL,
    }


def _emit(s: Scenario, outputs: list[str], csv_body: str | None, json_obj, suffix: str = "") -> str:
    """Render one result in the scenario's format; write it when a path is set."""
    if json_obj is None:
        text = csv_body
    else:
        text = csv_body if s.output_format == "csv" and csv_body is not None else dumps_json(json_obj)
    path = s.output_path
    if path:
        if suffix:
            p = Path(path)
            path = str(p.with_name(p.stem + suffix))
        write_atomic(path, text)
        outputs.append(path)
    return text


def run_scenario(s: Scenario, *, threads: int = 1, echo=None) -> RunManifest:
    """Run ``s``, write its outputs and return the manifest.

    ``echo(text)`` receives the rendered result when no output path is set.
    Raises :class:`ConvergenceError` when a steady solve does not converge.
    """
    start = time.perf_counter()
    outputs: list[str] = []
    ledger: dict = {}
    verdicts: dict = {}
    texts: list[str] = []

    def emit(csv_body, json_obj, suffix=""):
        texts.append(_emit(s, outputs, csv_body, json_obj, suffix))

    try:
        if s.mode == "simulate":
            ledger, verdicts = _run_simulate(s, emit)
        elif s.mode == "steady":
            ledger, verdicts = _run_steady(s, emit)
        elif s.mode == "sweep":
            verdicts = _run_sweep(s, emit)
        elif s.mode == "multicomp":
            verdicts = _run_multicomp(s, emit, outputs)
        elif s.mode == "oracle":
            _run_oracle(s, emit)
        else:
            verdicts = _run_classify(s, emit)
    except StiffnessError as exc:
        raise ConvergenceError(f"scenario '{s.name}' ({s.mode}): {exc}") from exc
    if echo is not None and not s.output_path:
        for t in texts:
            echo(t)
    return RunManifest(
        scenario_hash=scenario_hash(s),
        version=__version__,
        mode=s.mode,
        wall_time=time.perf_counter() - start,
        ledger=ledger,
        verdicts=verdicts,
        outputs=outputs,
        threads=threads,
    )


def _run_simulate(s: Scenario, emit):
    kernel, source = s.kernel(), s.source()
    cfg = s.solver()
    init = StateVector.monomers(cfg.nmax) if s.get("solver", "initial") == "monomers" else StateVector.zeros(cfg.nmax)
    checks = sorted(set(s.get("solver", "checkpoints")) | {cfg.t_end})
    tr = integrate(init, kernel, source, cfg, checkpoints=checks)
    ledger = _ledger(init, tr.state, source)
    rows = [(c.t, k, c.n[k]) for c in tr.checkpoints for k in range(1, cfg.nmax + 1) if c.n[k] > 0 or k <= 100]
    body = {
        "checkpoints": [
            {"t": c.t, "total_number": float(c.n[1:].sum()), "n": c.n[1:].tolist()} for c in tr.checkpoints
        ],
        "ledger": ledger,
    }
    cuts = s.get("solver", "flux_cuts")
    if cuts:
        flux = [(c.t, r, j) for c in tr.checkpoints for r, j in zip(cuts, mass_flux(c, kernel, cuts).J)]
        body["flux"] = [{"t": t, "R": r, "J": j} for t, r, j in flux]
        if s.output_format == "csv":
            emit(csv_text(["t", "R", "J"], flux), None, suffix=".flux.csv")
    emit(csv_text(["t", "k", "n"], rows), body)
    return ledger, {"ledger_balanced": ledger["balanced"]}


def _run_steady(s: Scenario, emit):
    kernel, source = s.kernel(), s.source()
    cfg = s.solver()
    st = s.values["steady"]
    res = solve_stationary(kernel, source, cfg, tol=st["tol"], t_cap=st["t_cap"], method=st["method"])
    bound = invariant_region_bound(kernel, source, cfg.r_star)
    init = StateVector.zeros(cfg.nmax)
    ledger = _ledger(init, res.profile, source) if st["method"] == "integrate" else {}
    verdicts = {
        "converged": res.converged,
        "total_number": res.total,
        "residual": res.residual,
        "plateau_flatness": res.plateau_flatness,
        "invariant_region_bound": bound,
        "below_bound": res.total <= bound,
        "message": res.message,
    }
    n = res.profile.n
    emit(csv_text(["k", "n"], ((k, n[k]) for k in range(1, cfg.nmax + 1))),
         {"summary": verdicts, "n": n[1:].tolist()})
    if not res.converged:
        raise ConvergenceError(f"scenario '{s.name}': steady solve did not converge: {res.message}")
    return ledger, verdicts


def _run_sweep(s: Scenario, emit):
    kernel, source = s.kernel(), s.source()
    sw = s.values["sweep"]
    th = SweepThresholds(stable_rel=sw["stable_rel"], diverge_rel=sw["diverge_rel"], tail_margin=sw["tail_margin"])
    rep = truncation_sweep(kernel, source, sw["truncations"], tol=s.get("steady", "tol"), method=sw["method"],
                           thresholds=th, cutoff_mode=s.get("solver", "cutoff_mode"))
    rows = [(m, tot, res, rep.verdict) for m, tot, res in zip(rep.truncations, rep.totals, rep.residuals)]
    summary = {
        "kernel": kernel.kind,
        "verdict": rep.verdict,
        "truncations": rep.truncations,
        "totals": rep.totals,
        "residuals": rep.residuals,
        "envelope_moments": rep.envelope_moments,
        "tail_exponents": rep.tail_exponents,
        "tail_margin": rep.tail_margin,
        "failed": rep.failed,
        "thresholds": asdict(th),
    }
    emit(csv_text(["nmax", "total", "residual", "verdict"], rows), summary)
    if s.output_format == "csv":
        emit(None, summary, suffix=".summary.json")
    return {"verdict": rep.verdict, "tail_margin": rep.tail_margin, "failed": rep.failed}


def _run_multicomp(s: Scenario, emit, outputs):
    m = s.values["multicomp"]
    d, cap, h = m["dim"], m["cap"], m["h"]
    if m["mode"] == "solve":
        kernel = s.kernel() or KernelSpec.constant(2.0)
        src = MultiSource.uniform_monomers(d, h) if h > 0 else None
        state, _ = integrate_multi(MultiState.uniform_monomers(d, cap), kernel, m["tmax"], src)
    elif m["mode"] == "oracle":
        t = m["tmax"]
        state = MultiState.from_function(d, cap, lambda a: analytic_time_solution(a, t))
        state.t = t
    else:
        state = MultiState.from_function(d, cap, lambda a: analytic_stationary(a, h))
    entries = list(state.items())
    emit(
        csv_text([f"a{i + 1}" for i in range(d)] + ["n"], (a + (v,) for a, v in entries)),
        [{"alpha": list(a), "n": v} for a, v in entries],
    )
    if m["heatmap"]:
        emit_heatmap(state, m["heatmap"])
        outputs.append(m["heatmap"])
    return {"total_number": state.total_number(), "component_mass": state.component_mass().tolist(),
            "leak_mass": state.leak_mass.tolist()}


def _run_oracle(s: Scenario, emit):
    o = s.values["oracle"]
    kind, kmax = o["kind"], o["kmax"]
    if kind == "onecomp_time":
        rows = [(k, t, v) for t in o["t"] for k, v in enumerate(onecomp_time_array(kmax, t)) if k >= 1]
        header = ["k", "t", "n"]
    elif kind == "onecomp_stationary":
        rows = [(k, o["h"], v) for k, v in enumerate(onecomp_stationary_array(kmax, o["h"])) if k >= 1]
        header = ["k", "h", "n"]
    elif kind == "total_number":
        rows = [(t, total_number(t)) for t in o["t"]]
        header = ["t", "N"]
    else:
        rows = [(";".join(fmt(z) for z in o["z"]), t, generating_fn(o["z"], t)) for t in o["t"]]
        header = ["z", "t", "F"]
    emit(csv_text(header, rows), [dict(zip(header, r)) for r in rows])


def _run_classify(s: Scenario, emit):
    env = s.envelope()
    verdict = classify_regime(env)
    row = {"gamma": env.gamma, "lambda": env.lam, "exists": verdict.exists, "margin": verdict.margin}
    line = "{" + ", ".join(f"{json.dumps(k)}: {_dump(_jsonable(v), 0)}" for k, v in row.items()) + "}\n"
    emit(csv_text(list(row), [tuple(row.values())]) if s.output_format == "csv" else line, None)
    return {"exists": verdict.exists, "margin": verdict.margin}
