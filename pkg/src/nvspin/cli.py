"""Command-line front end: config-driven, bit-stable exports.

Each subcommand reads one TOML config file, runs the matching module
entry point, and writes its tables into the configured output
directory.  Identical configs produce byte-identical files: every
float that leaves the program passes through a single %.9g gate,
worker pools only compute, and the parent process is the sole writer.

Exit codes: 0 success, 2 config error, 3 integration fault,
4 level-tracking or scan-window error.
"""

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from . import composer
from . import model as mdl
from . import spincore as sc
from .evolution import IntegrationFault, NoiseSpec, evolve
from .fidelity import GateReport, state_fidelity, state_set
from .model import TrackingError
from .pulses import PulseSchedule, PulseSegment, Tone
from .scan import (ScanSpec, ScanWindowError, SequenceSpec, SequenceStep,
                   bell_fidelity_trace, bell_preparation, compile_sequence,
                   fidelity_vs_omega_scan, jitter_ranked_peaks,
                   optimize_pi_pulse, preset_gate_spec, scan_rows_to_csv,
                   sequence_fidelity_trace)


class ConfigError(ValueError):
    """Bad or missing configuration; maps to exit code 2."""


# -- config schema -----------------------------------------------------------
# One section per module type.  Keys default to None when a command
# must decide whether they are required; everything else carries the
# documented default.  Unknown sections and keys are hard errors.

_SCHEMA = {
    "model": {
        "preset": ("str", "nearest_neighbor"),
        "field_mT": ("float", 25.0),
        "strain_MHz": ("float", 0.0),
        "c_parallel_MHz": ("float", None),
        "c_perp_MHz": ("float", None),
        "theta_rad": ("float", None),
    },
    "noise": {
        "enabled": ("bool", True),
        "t1_v_ms": ("float", 10.0),
        "t2star_v_us": ("float", 100.0),
        "t1_c_s": ("float", 10.0),
        "t2_c_ms": ("float", 10.0),
        "t1_n_s": ("float", 10.0),
        "t2_n_ms": ("float", 10.0),
    },
    "output": {
        "directory": ("str", "out"),
        "workers": ("int", 1),
        "deterministic": ("bool", True),
    },
    "levels": {
        "b_min_mT": ("float", 0.0),
        "b_max_mT": ("float", 120.0),
        "points": ("int", 481),
        "crossings": ("bool", True),
    },
    "transitions": {
        "threshold": ("float", 1e-6),
    },
    "pulse": {
        "level_pair": ("intpair", None),
        "omega0_MHz": ("float", None),
        "window_lo_ns": ("float", None),
        "window_hi_ns": ("float", None),
        "phi0_rad": ("float", 0.0),
        "state_set": ("str", "vacancy25"),
        "refine": ("int", 10),
        "label": ("str", "pulse"),
    },
    "scan": {
        "gate": ("str", None),
        "omega_grid_MHz": ("floatlist", None),
        "omega_min_MHz": ("float", None),
        "omega_max_MHz": ("float", None),
        "omega_step_MHz": ("float", None),
        "window_lo_ns": ("float", None),
        "window_hi_ns": ("float", None),
        "refine": ("int", 10),
    },
    "sequence": {
        "label": ("str", "sequence"),
        "bell": ("str", None),
        "scheme": ("str", "two"),
        "omega_mw_MHz": ("float", 10.0),
        "omega_rf_MHz": ("float", None),
        "stark_correct": ("bool", True),
        "steps": ("steplist", None),
        "start": ("inttriple", None),
        "samples": ("int", 200),
    },
    "compose": {
        "site": ("str", None),
        "catalog_file": ("str", None),
        "report_files": ("strlist", ()),
    },
    "selftest": {
        "instances": ("int", 100),
        "seed": ("int", 20260816),
    },
}


def _coerce(kind, value):
    """Check a raw TOML value against a schema kind.

    Returns the canonical python value; raises TypeError whose message
    names the expected shape.
    """
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError("a number")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError("an integer")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise TypeError("true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise TypeError("a string")
        return value
    if kind == "floatlist":
        ok = (isinstance(value, list) and value and all(
            not isinstance(v, bool) and isinstance(v, (int, float))
            for v in value))
        if not ok:
            raise TypeError("a non-empty array of numbers")
        return tuple(float(v) for v in value)
    if kind == "intpair":
        ok = (isinstance(value, list) and len(value) == 2 and all(
            not isinstance(v, bool) and isinstance(v, int) for v in value))
        if not ok:
            raise TypeError("an array of two integers")
        return (value[0], value[1])
    if kind == "inttriple":
        ok = (isinstance(value, list) and len(value) == 3 and all(
            not isinstance(v, bool) and isinstance(v, int) for v in value))
        if not ok:
            raise TypeError("an array of three integers")
        return (value[0], value[1], value[2])
    if kind == "strlist":
        if not isinstance(value, list) or not all(
                isinstance(v, str) for v in value):
            raise TypeError("an array of strings")
        return tuple(value)
    if kind == "steplist":
        if not isinstance(value, list) or not all(
                isinstance(v, dict) for v in value):
            raise TypeError("an array of step tables")
        return list(value)
    raise AssertionError(f"schema kind {kind!r}")


def _key_line(text, section, key=None):
    """Best-effort 1-based line number of a key inside a section.

    With key=None, finds the section header itself; top-level keys use
    section=None.  Returns None when the scan fails (inline tables,
    dotted keys), in which case messages omit the line.
    """
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("["):
            current = stripped.strip("[]").strip().strip('"')
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            if re.match(re.escape(key) + r"\s*=", stripped):
                return lineno
    return None


class RunConfig:
    """Validated config: schema-checked sections with defaults filled."""

    def __init__(self, path, data):
        self.path = str(path)
        self._data = data

    def __getitem__(self, section):
        return self._data[section]

    def require(self, section, key):
        value = self._data[section][key]
        if value is None:
            raise ConfigError(
                f"{self.path}: [{section}] requires key {key!r}")
        return value

    @classmethod
    def defaults(cls):
        data = {section: {key: default for key, (_, default) in keys.items()}
                for section, keys in _SCHEMA.items()}
        return cls("<defaults>", data)


def load_config(path):
    """Parse and validate one TOML config file into a RunConfig.

    Unknown sections, unknown keys, and type mismatches are hard
    errors carrying file:line positions where they can be found.
    """
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    data = {section: {key: default for key, (_, default) in keys.items()}
            for section, keys in _SCHEMA.items()}
    for section, body in raw.items():
        if section not in _SCHEMA:
            line = _key_line(text, section) or _key_line(text, None, section)
            where = f"{path}:{line}" if line else f"{path}"
            raise ConfigError(f"{where}: unknown section [{section}]")
        if not isinstance(body, dict):
            line = _key_line(text, None, section)
            where = f"{path}:{line}" if line else f"{path}"
            raise ConfigError(
                f"{where}: top-level key {section!r} must be a section")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                line = _key_line(text, section, key)
                where = f"{path}:{line}" if line else f"{path}"
                raise ConfigError(
                    f"{where}: unknown key {key!r} in [{section}]")
            kind = _SCHEMA[section][key][0]
            try:
                data[section][key] = _coerce(kind, value)
            except TypeError as exc:
                line = _key_line(text, section, key)
                where = f"{path}:{line}" if line else f"{path}"
                raise ConfigError(
                    f"{where}: [{section}] key {key!r} must be {exc}"
                ) from None

    if not data["output"]["deterministic"]:
        line = _key_line(text, "output", "deterministic")
        where = f"{path}:{line}" if line else f"{path}"
        raise ConfigError(f"{where}: determinism cannot be disabled")
    if data["output"]["workers"] < 1:
        raise ConfigError(f"{path}: [output] workers must be >= 1")
    return RunConfig(path, data)


# -- output helpers ----------------------------------------------------------

def _fmt(x):
    """The single formatting gate for floats leaving the program."""
    return f"{float(x):.9g}"


def _round_floats(obj):
    """Recursively clamp floats to 9 significant digits for JSON."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(_fmt(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _json_text(obj):
    return json.dumps(_round_floats(obj), indent=2, sort_keys=True) + "\n"


def _outdir(cfg):
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path, text):
    path.write_text(text)
    print(f"wrote {path}")


# -- builders ----------------------------------------------------------------

_CUSTOM_KEYS = ("c_parallel_MHz", "c_perp_MHz", "theta_rad")


def _build_model(cfg):
    sec = cfg["model"]
    preset = sec["preset"]
    if preset != "custom" and any(sec[k] is not None for k in _CUSTOM_KEYS):
        raise ConfigError(
            f"{cfg.path}: [model] hyperfine keys require preset = 'custom'")
    if preset == "nearest_neighbor":
        return mdl.nearest_neighbor_model(sec["field_mT"],
                                          strain=sec["strain_MHz"])
    if preset == "third_neighbor":
        return mdl.third_neighbor_model(sec["field_mT"],
                                        strain=sec["strain_MHz"])
    if preset == "custom":
        missing = [k for k in _CUSTOM_KEYS if sec[k] is None]
        if missing:
            raise ConfigError(
                f"{cfg.path}: [model] custom preset requires "
                f"{', '.join(missing)}")
        carbon = mdl.HyperfineTensor(sec["c_parallel_MHz"],
                                     sec["c_perp_MHz"],
                                     frame="principal",
                                     theta=sec["theta_rad"])
        return mdl.RegisterModel(field_mt=sec["field_mT"],
                                 strain=sec["strain_MHz"], carbon=carbon)
    raise ConfigError(f"{cfg.path}: unknown model preset {preset!r}")


def _build_noise(cfg):
    sec = cfg["noise"]
    if not sec["enabled"]:
        return None
    return NoiseSpec(t1_v_ms=sec["t1_v_ms"], t2star_v_us=sec["t2star_v_us"],
                     t1_c_s=sec["t1_c_s"], t2_c_ms=sec["t2_c_ms"],
                     t1_n_s=sec["t1_n_s"], t2_n_ms=sec["t2_n_ms"])


# -- subcommands -------------------------------------------------------------

def cmd_levels(cfg):
    """Level scan CSV, z-fidelity CSV, and crossing report JSON."""
    model = _build_model(cfg)
    sec = cfg["levels"]
    if sec["b_max_mT"] <= sec["b_min_mT"]:
        raise ConfigError(f"{cfg.path}: [levels] needs b_max_mT > b_min_mT")
    if sec["points"] < 2:
        raise ConfigError(f"{cfg.path}: [levels] needs at least two points")
    grid = np.linspace(sec["b_min_mT"], sec["b_max_mT"], sec["points"])
    scan = mdl.scan_levels(model, grid)
    out = _outdir(cfg)
    _write(out / "levels.csv", scan.to_csv())

    lines = ["B_mT,level_index,z_fidelity"]
    for ib, b in enumerate(scan.b_grid):
        for lvl in range(scan.z_fidelities.shape[1]):
            lines.append(",".join((_fmt(b), str(lvl),
                                   _fmt(scan.z_fidelities[ib, lvl]))))
    _write(out / "zfidelity.csv", "\n".join(lines) + "\n")

    if sec["crossings"]:
        rep = mdl.crossing_report(model)
        data = {
            "exchange_field_mT": rep.exchange_field_mt,
            "exchange_gap_field_mT": rep.exchange_gap_field_mt,
            "exchange_gap_MHz": rep.exchange_gap_mhz,
            "strain_center_mT": rep.strain_center_mt,
            "strain_records": [
                {"field_mT": r.field_mt, "gap_MHz": r.gap_mhz,
                 "branch_low": r.branch_low, "branch_high": r.branch_high}
                for r in rep.strain_records],
        }
        _write(out / "crossings.json", _json_text(data))
        print(f"exchange crossing at {_fmt(rep.exchange_field_mt)} mT, "
              f"strain window center {_fmt(rep.strain_center_mt)} mT")
    print(f"levels: {sec['points']} fields from {_fmt(sec['b_min_mT'])} to "
          f"{_fmt(sec['b_max_mT'])} mT")
    return 0


def cmd_transitions(cfg):
    """Transition table CSV: frequency, element, drive flag per pair."""
    model = _build_model(cfg)
    threshold = cfg["transitions"]["threshold"]
    if threshold <= 0:
        raise ConfigError(f"{cfg.path}: [transitions] threshold must be > 0")
    table = mdl.transition_table(model, threshold=threshold)
    lines = ["level_a,level_b,frequency_MHz,element_magnitude,drive_allowed"]
    allowed = 0
    for (a, b), freq, flag in table:
        elem = mdl.transition_element(model, (a, b))
        allowed += bool(flag)
        lines.append(",".join((str(a), str(b), _fmt(freq), _fmt(abs(elem)),
                               "1" if flag else "0")))
    out = _outdir(cfg)
    _write(out / "transitions.csv", "\n".join(lines) + "\n")
    print(f"transitions: {len(table)} pairs, {allowed} drive-allowed")
    return 0


def cmd_pulse(cfg):
    """Optimize one resonant pi pulse; trace CSV plus report JSON."""
    model = _build_model(cfg)
    noise = _build_noise(cfg)
    sec = cfg["pulse"]
    a, b = cfg.require("pulse", "level_pair")
    if not (0 <= a < b < sc.DIM):
        raise ConfigError(
            f"{cfg.path}: [pulse] level_pair must be ascending indices "
            f"below {sc.DIM}")
    window = (cfg.require("pulse", "window_lo_ns"),
              cfg.require("pulse", "window_hi_ns"))
    vals, _ = mdl.eigensystem(model)
    carrier = float(vals[b] - vals[a])
    spec = ScanSpec(model, (carrier,), (cfg.require("pulse", "omega0_MHz"),),
                    window, state_set(sec["state_set"]), noise,
                    phases=(sec["phi0_rad"],), refine=sec["refine"],
                    label=sec["label"])
    trace = []
    report = optimize_pi_pulse(spec, workers=cfg["output"]["workers"],
                               trace_rows=trace)
    out = _outdir(cfg)
    _write(out / "pulse_trace.csv", scan_rows_to_csv(trace))
    _write(out / "pulse_report.json", _json_text(report.to_json()))
    print(f"pulse {report.label}: min fidelity "
          f"{_fmt(100.0 * report.fidelity)} percent at "
          f"{_fmt(report.duration_ns)} ns on {_fmt(carrier)} MHz")
    return 0


def cmd_scan(cfg):
    """Gate-preset power scan: trace, curve, ranked peaks, best report."""
    model = _build_model(cfg)
    noise = _build_noise(cfg)
    sec = cfg["scan"]
    gate = cfg.require("scan", "gate")
    window = (cfg.require("scan", "window_lo_ns"),
              cfg.require("scan", "window_hi_ns"))

    grid = sec["omega_grid_MHz"]
    range_keys = ("omega_min_MHz", "omega_max_MHz", "omega_step_MHz")
    if grid is None:
        lo, hi, step = (sec[k] for k in range_keys)
        if lo is None or hi is None or step is None:
            raise ConfigError(
                f"{cfg.path}: [scan] needs omega_grid_MHz or all of "
                f"{', '.join(range_keys)}")
        if step <= 0 or hi <= lo:
            raise ConfigError(
                f"{cfg.path}: [scan] omega range needs hi > lo and a "
                f"positive step")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        grid = tuple(lo + step * k for k in range(n))
    elif any(sec[k] is not None for k in range_keys):
        raise ConfigError(
            f"{cfg.path}: [scan] omega_grid_MHz excludes the range keys")

    spec = preset_gate_spec(model, gate, grid, window, noise=noise,
                            refine=sec["refine"])
    workers = cfg["output"]["workers"]
    trace = []
    curve = fidelity_vs_omega_scan(spec, workers=workers, trace_rows=trace)
    peaks = jitter_ranked_peaks(spec, curve, workers=workers)

    out = _outdir(cfg)
    _write(out / "scan_trace.csv", scan_rows_to_csv(trace))
    curve_lines = ["omega0_MHz,min_fidelity"]
    curve_lines += [",".join((_fmt(om), _fmt(f))) for om, f in curve]
    _write(out / "scan_curve.csv", "\n".join(curve_lines) + "\n")
    peak_lines = ["omega0_MHz,min_fidelity,jitter,score"]
    peak_lines += [",".join((_fmt(om), _fmt(f), _fmt(j), _fmt(s)))
                   for om, f, j, s in peaks]
    _write(out / "scan_peaks.csv", "\n".join(peak_lines) + "\n")

    best = ScanSpec(spec.model, spec.carriers, (peaks[0][0],), spec.window,
                    spec.states, spec.noise, spec.phases, spec.refine,
                    spec.label)
    report = optimize_pi_pulse(best, workers=workers)
    _write(out / "scan_report.json", _json_text(report.to_json()))
    print(f"scan {gate}: jitter-preferred omega0 {_fmt(peaks[0][0])} MHz, "
          f"min fidelity {_fmt(100.0 * report.fidelity)} percent at "
          f"{_fmt(report.duration_ns)} ns")
    return 0


_STEP_KEYS = ("pair", "theta_pi", "phase_rad", "omega0_MHz", "detune_MHz")


def _step_num(item, key, default, k):
    value = item.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[sequence] steps[{k}]: {key} must be a number")
    return float(value)


def _parse_steps(raw_steps):
    """Explicit step tables to SequenceStep tuples; angles in pi units."""
    steps = []
    for k, item in enumerate(raw_steps):
        unknown = sorted(set(item) - set(_STEP_KEYS))
        if unknown:
            raise ConfigError(
                f"[sequence] steps[{k}]: unknown keys {unknown}")
        for key in ("pair", "theta_pi"):
            if key not in item:
                raise ConfigError(
                    f"[sequence] steps[{k}] requires {key!r}")
        pair = item["pair"]
        ok = (isinstance(pair, list) and len(pair) == 2 and all(
            not isinstance(v, bool) and isinstance(v, int) for v in pair))
        if not ok:
            raise ConfigError(
                f"[sequence] steps[{k}]: pair must be two level indices")
        steps.append(SequenceStep(
            (pair[0], pair[1]),
            _step_num(item, "theta_pi", None, k) * math.pi,
            _step_num(item, "phase_rad", 0.0, k),
            _step_num(item, "omega0_MHz", 10.0, k),
            _step_num(item, "detune_MHz", 0.0, k)))
    return tuple(steps)


def cmd_sequence(cfg):
    """Run a pulse train (explicit steps or a Bell preset) and trace it."""
    model = _build_model(cfg)
    noise = _build_noise(cfg)
    sec = cfg["sequence"]
    if (sec["bell"] is None) == (sec["steps"] is None):
        raise ConfigError(
            f"{cfg.path}: [sequence] needs exactly one of 'bell' or 'steps'")
    if sec["samples"] < 2:
        raise ConfigError(f"{cfg.path}: [sequence] samples must be >= 2")

    if sec["bell"] is not None:
        if sec["start"] is not None:
            raise ConfigError(
                f"{cfg.path}: [sequence] start applies to explicit steps "
                f"only; bell presets fix their own initial state")
        prep = bell_preparation(model, which=sec["bell"],
                                scheme=sec["scheme"],
                                omega_mw=sec["omega_mw_MHz"],
                                omega_rf=sec["omega_rf_MHz"],
                                stark_correct=sec["stark_correct"])
        seq, rho0 = prep.seq, prep.rho0
        total = compile_sequence(model, seq).total_duration
        times = np.linspace(0.0, total, sec["samples"])
        trace = bell_fidelity_trace(model, prep, noise, times)
        extra = {"mode": "bell", "scored_pair": list(prep.pair)}
    else:
        start = cfg.require("sequence", "start")
        rho0 = sc.basis_state(*start)
        seq = SequenceSpec(sec["label"], _parse_steps(sec["steps"]))
        if not seq.steps:
            raise ConfigError(f"{cfg.path}: [sequence] steps is empty")
        total = compile_sequence(model, seq).total_duration
        times = np.linspace(0.0, total, sec["samples"])
        trace = sequence_fidelity_trace(model, seq, rho0, noise, times)
        extra = {"mode": "steps"}

    k = int(np.argmax(trace))
    lines = ["t_ns,fidelity"]
    lines += [",".join((_fmt(t), _fmt(f))) for t, f in zip(times, trace)]
    out = _outdir(cfg)
    _write(out / "sequence_trace.csv", "\n".join(lines) + "\n")
    data = {
        "label": seq.name,
        "duration_ns": total,
        "peak_fidelity_pct": 100.0 * float(trace[k]),
        "peak_time_ns": float(times[k]),
        "final_fidelity_pct": 100.0 * float(trace[-1]),
        "steps": [{"level_pair": list(s.level_pair), "theta_rad": s.theta,
                   "phase_rad": s.phase, "omega0_MHz": s.omega0,
                   "detune_MHz": s.detune} for s in seq.steps],
    }
    data.update(extra)
    _write(out / "sequence.json", _json_text(data))
    print(f"sequence {seq.name}: peak fidelity "
          f"{_fmt(100.0 * float(trace[k]))} percent at {_fmt(times[k])} ns "
          f"of {_fmt(total)} ns")
    return 0


def _report_from_json(data, path):
    """Rebuild a GateReport from the dict shape its to_json emits."""
    try:
        pair = tuple(tuple(p) if isinstance(p, list) else p
                     for p in data["level_pair"])
        return GateReport(
            label=data["label"],
            level_pair=pair,
            state_set=data["state_set"],
            omega0=float(data["omega0_MHz"]),
            nu=float(data["nu_MHz"]),
            phi0=float(data["phi0_rad"]),
            duration_ns=float(data["time_ns"]),
            fidelity=float(data["fidelity_pct"]) / 100.0,
            fidelity_avg=float(data["fidelity_avg_pct"]) / 100.0,
            uncertainty=float(data["uncertainty_pct"]) / 100.0,
            per_state=tuple((lab, float(f) / 100.0)
                            for lab, f in data["per_state"]),
            carriers=tuple(float(c) for c in data["carriers_MHz"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a gate report file ({exc})") from None


def cmd_compose(cfg):
    """Derived-gate estimates: catalog JSON, comparison CSV, DOT graph."""
    sec = cfg["compose"]
    site = sec["site"] or cfg["model"]["preset"]
    if site == "custom":
        raise ConfigError(
            f"{cfg.path}: [compose] needs an explicit site for custom "
            f"models")

    if sec["catalog_file"] is not None:
        if sec["report_files"]:
            raise ConfigError(
                f"{cfg.path}: [compose] catalog_file excludes report_files")
        try:
            catalog = composer.catalog_from_json(
                Path(sec["catalog_file"]).read_text())
        except (ValueError, KeyError) as exc:
            raise ConfigError(
                f"{sec['catalog_file']}: {exc}") from None
    else:
        reports = []
        for name in sec["report_files"]:
            try:
                payload = json.loads(Path(name).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{name}: {exc}") from None
            reports.append(_report_from_json(payload, name))
        catalog = composer.default_catalog(site, reports=reports)

    out = _outdir(cfg)
    _write(out / "catalog.json",
           _json_text(json.loads(composer.catalog_to_json(catalog))))

    # winners per target under both objectives, for the comparison flags
    targets = sorted({i.target for i in catalog.identities()})
    best_fid = {t: composer.best_identity(t, catalog, "fidelity")
                for t in targets}
    best_time = {t: composer.best_identity(t, catalog, "time")
                 for t in targets}

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("target", "steps", "fidelity_percent", "time_ns",
                     "entry_fidelity_percent", "entry_time_ns",
                     "best_by_fidelity", "best_by_time", "note"))
    for ident in sorted(catalog.identities(),
                        key=lambda i: (i.target, i.steps)):
        derived = composer.compose(ident, catalog)
        entry_fid = entry_time = ""
        if ident.target in catalog:
            entry = catalog.entry(ident.target)
            entry_fid = _fmt(100.0 * entry.fidelity)
            entry_time = _fmt(entry.time_ns)
        writer.writerow((
            ident.target, "+".join(ident.steps),
            _fmt(100.0 * derived.fidelity), _fmt(derived.time_ns),
            entry_fid, entry_time,
            "1" if best_fid[ident.target].identity == ident else "0",
            "1" if best_time[ident.target].identity == ident else "0",
            ident.note))
    _write(out / "derived.csv", buf.getvalue())

    graph = composer.dependency_graph(catalog)
    _write(out / "graph.dot", graph.to_dot())

    print(f"compose {site}: {len(catalog.entries())} entries, "
          f"{len(catalog.identities())} identities")
    for target in targets:
        routes = catalog.identities(target)
        if len(routes) < 2:
            continue
        shown = " vs ".join(
            f"{_fmt(d.time_ns)} ns at {_fmt(100.0 * d.fidelity)} percent"
            for d in (composer.compose(i, catalog) for i in routes))
        print(f"  {target}: {shown}")
    return 0


# -- selftest ----------------------------------------------------------------

@dataclass(frozen=True)
class SelftestResult:
    """One invariant family: worst deviation over all instances."""

    name: str
    instances: int
    worst: float
    bound: float

    @property
    def ok(self):
        return self.worst <= self.bound


def _random_state(rng, dim=sc.DIM, rank=3):
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def _random_schedule(rng):
    segments = []
    for _ in range(int(rng.integers(1, 3))):
        tones = tuple(
            Tone(float(rng.uniform(2.0, 25.0)),
                 float(rng.uniform(5.0, 2900.0)),
                 float(rng.uniform(0.0, 2.0 * math.pi)))
            for _ in range(int(rng.integers(1, 3))))
        segments.append(PulseSegment(tones, float(rng.uniform(2.0, 10.0))))
    return PulseSchedule(tuple(segments))


def _selftest_evolution(rng, instances):
    """Trace, hermiticity, and positivity of noisy driven evolution."""
    model = mdl.nearest_neighbor_model(25.0)
    noise = NoiseSpec()
    worst = 0.0
    for _ in range(instances):
        rho0 = _random_state(rng)
        result = evolve(rho0, model, _random_schedule(rng), noise=noise)
        rho = result.rho_final
        worst = max(worst,
                    abs(np.trace(rho).real - 1.0),
                    float(np.abs(rho - rho.conj().T).max()),
                    max(0.0, -float(np.linalg.eigvalsh(rho).min())))
    return SelftestResult("evolution trace, hermiticity, positivity",
                          instances, worst, 1e-6)


def _psd_sqrt(m):
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _general_fidelity(rho, sigma):
    # independent of the library shortcut: straight Uhlmann formula
    root = _psd_sqrt(rho)
    w = np.linalg.eigvalsh(root @ sigma @ root)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)


def _selftest_fidelity(rng, instances):
    """Symmetry and pure-state shortcut against the general formula."""
    worst = 0.0
    for _ in range(instances):
        rho = _random_state(rng)
        sigma = _random_state(rng)
        worst = max(worst, abs(state_fidelity(rho, sigma)
                               - state_fidelity(sigma, rho)))
        worst = max(worst, abs(state_fidelity(rho, sigma)
                               - _general_fidelity(rho, sigma)))
        pure = _random_state(rng, rank=1)
        worst = max(worst, abs(state_fidelity(pure, sigma)
                               - _general_fidelity(pure, sigma)))
    return SelftestResult("fidelity symmetry and pure-state shortcut",
                          instances, worst, 1e-8)


def _selftest_angle_transform(rng, instances):
    """Rotating the hyperfine tensor preserves its trace."""
    worst = 0.0
    for _ in range(instances):
        c_par = float(rng.uniform(-300.0, 300.0))
        c_perp = float(rng.uniform(-300.0, 300.0))
        theta = float(rng.uniform(0.0, math.pi))
        par, perp, _, _ = mdl.nv_frame_coefficients(c_par, c_perp, theta)
        worst = max(worst, abs((par + 2.0 * perp) - (c_par + 2.0 * c_perp)))
    return SelftestResult("hyperfine rotation trace identity",
                          instances, worst, 1e-9)


def _selftest_embed(rng, instances):
    """Operators embedded on distinct slots commute."""
    worst = 0.0
    slots = (("V", 3), ("C", 2), ("N", 2))
    for _ in range(instances):
        ops = {}
        for slot, dim in slots:
            ops[slot] = sc.embed(
                rng.normal(size=(dim, dim))
                + 1j * rng.normal(size=(dim, dim)), slot)
        for i in range(len(slots)):
            for j in range(i + 1, len(slots)):
                a, b = ops[slots[i][0]], ops[slots[j][0]]
                worst = max(worst, float(np.abs(a @ b - b @ a).max()))
    return SelftestResult("slot embedding commutation",
                          instances, worst, 1e-12)


def run_selftest(instances=100, seed=20260816):
    """Run every invariant family on fresh random instances."""
    rng = np.random.default_rng(seed)
    return (_selftest_evolution(rng, instances),
            _selftest_fidelity(rng, instances),
            _selftest_angle_transform(rng, instances),
            _selftest_embed(rng, instances))


def cmd_selftest(cfg):
    sec = cfg["selftest"]
    if sec["instances"] < 1:
        raise ConfigError(f"{cfg.path}: [selftest] instances must be >= 1")
    results = run_selftest(sec["instances"], sec["seed"])
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"selftest {r.name}: {status} ({r.instances} instances, "
              f"worst {_fmt(r.worst)} vs bound {_fmt(r.bound)})")
    if all(r.ok for r in results):
        print("selftest: all invariants hold")
        return 0
    print("selftest: invariant violation", file=sys.stderr)
    return 3


# -- entry point -------------------------------------------------------------

_COMMANDS = (
    ("levels", cmd_levels, "field scan: levels, z fidelity, crossings"),
    ("transitions", cmd_transitions, "transition frequency/element table"),
    ("pulse", cmd_pulse, "optimize one resonant pi pulse"),
    ("scan", cmd_scan, "drive-power scan for a preset gate"),
    ("sequence", cmd_sequence, "run a pulse train or Bell preset"),
    ("compose", cmd_compose, "derived-gate estimates from the catalog"),
    ("selftest", cmd_selftest, "run the physics invariant suite"),
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nvspin",
        description="Simulate a driven NV center spin register.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in _COMMANDS:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", default=None,
                       help="TOML config file (selftest runs on defaults "
                            "without one)")
        p.set_defaults(func=func, needs_config=(func is not cmd_selftest))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            if args.needs_config:
                raise ConfigError(f"{args.command} requires --config")
            cfg = RunConfig.defaults()
        else:
            cfg = load_config(args.config)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrackingError, ScanWindowError) as exc:
        print(f"scan error: {exc}", file=sys.stderr)
        return 4
    except IntegrationFault as exc:
        print(f"integration fault: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
