"""
Scenario text format and the CSV / manifest writers.

Scenario files hold one directive per line; ``#`` starts a comment::

    param t_end 1.0
    init vdc 250
    init vref_amp 120
    init load P=5e3 Q=20e3
    event 0.2 set_vdc 150
    event 0.8 set_load P=5e3 Q=-20e3
"""
from __future__ import annotations

import hashlib
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import CircuitParams
from .errors import InvalidParameterError, ScenarioSyntaxError, ScenarioValidationError
from .simulation import TIMESERIES_COLUMNS, Event, Scenario

# file name -> (target, attribute)
PARAM_NAMES = {
    "L_f": ("params", "L_f"),
    "C_f": ("params", "C_f"),
    "f_sw": ("params", "f_sw"),
    "R_line": ("params", "R_line"),
    "L_line": ("params", "L_line"),
    "f_grid": ("scenario", "f_grid"),
    "t_end": ("scenario", "t_end"),
    "dt": ("scenario", "dt"),
    "lambda": ("scenario", "lam"),
    "bound": ("scenario", "bound"),
    "bound_factor": ("scenario", "bound_factor"),
    "t_sample": ("scenario", "t_sample"),
    "t_delay": ("scenario", "t_delay"),
    "record_dt": ("scenario", "record_dt"),
    "ref_phase": ("scenario", "ref_phase"),
}
INIT_NAMES = {"vdc": "v_dc", "vref_amp": "vref_amp", "load": "load"}
CSV_FORMAT = "%.9g"
SOA_COLUMNS = ("v_dc", "v_ref", "P", "Q", "worst_case_V", "margin", "satisfied")
ENVELOPE_COLUMNS = ("t", "predicted_env", "simulated_abs_err")


def _number(token, lineno, source):
    try:
        value = float(token)
    except ValueError:
        raise ScenarioSyntaxError(f"expected a number, got {token!r}", lineno, source) from None
    if not math.isfinite(value):
        raise ScenarioSyntaxError(f"non-finite number {token!r}", lineno, source)
    return value


def _power_pair(tokens, lineno, source):
    values = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key not in ("P", "Q"):
            raise ScenarioSyntaxError(f"expected P=<W> Q=<VAr>, got {tok!r}", lineno, source)
        if key in values:
            raise ScenarioSyntaxError(f"duplicate {key}", lineno, source)
        values[key] = _number(val, lineno, source)
    if set(values) != {"P", "Q"}:
        raise ScenarioSyntaxError("load needs both P=<W> and Q=<VAr>", lineno, source)
    return values["P"], values["Q"]


def parse_scenario(text, source=None):
    """
    Parse scenario text into a validated :class:`Scenario`.

    Events are sorted by time; events sharing a time keep their written
    order.

    Raises
    ------
    ScenarioSyntaxError
        Malformed line (carries the line number).
    ScenarioValidationError
        Well-formed input that breaks a scenario invariant.
    """
    circuit_kw = {}
    scenario_kw = {}
    init_seen = set()
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "param":
            if len(tokens) != 3:
                raise ScenarioSyntaxError("expected 'param <name> <number>'", lineno, source)
            name = tokens[1]
            if name not in PARAM_NAMES:
                raise ScenarioSyntaxError(f"unknown parameter {name!r}", lineno, source)
            target, attr = PARAM_NAMES[name]
            bucket = circuit_kw if target == "params" else scenario_kw
            if attr in bucket:
                raise ScenarioSyntaxError(f"duplicate parameter {name!r}", lineno, source)
            bucket[attr] = _number(tokens[2], lineno, source)
        elif head == "init":
            if len(tokens) < 3 or tokens[1] not in INIT_NAMES:
                raise ScenarioSyntaxError("expected 'init vdc|vref_amp|load ...'", lineno, source)
            name = tokens[1]
            if name in init_seen:
                raise ScenarioSyntaxError(f"duplicate init {name!r}", lineno, source)
            init_seen.add(name)
            if name == "load":
                scenario_kw["load"] = _power_pair(tokens[2:], lineno, source)
            elif len(tokens) != 3:
                raise ScenarioSyntaxError(f"expected 'init {name} <number>'", lineno, source)
            else:
                scenario_kw[INIT_NAMES[name]] = _number(tokens[2], lineno, source)
        elif head == "event":
            if len(tokens) < 4:
                raise ScenarioSyntaxError("expected 'event <t> <kind> <value>'", lineno, source)
            t = _number(tokens[1], lineno, source)
            kind = tokens[2]
            if kind == "set_load":
                value = _power_pair(tokens[3:], lineno, source)
            elif kind in ("set_vdc", "set_vref_amp"):
                if len(tokens) != 4:
                    raise ScenarioSyntaxError(f"expected 'event <t> {kind} <number>'",
                                              lineno, source)
                value = _number(tokens[3], lineno, source)
            else:
                raise ScenarioSyntaxError(f"unknown event kind {kind!r}", lineno, source)
            try:
                events.append(Event(t, kind, value))
            except ScenarioValidationError as exc:
                raise ScenarioValidationError(f"line {lineno}: {exc}") from None
        else:
            raise ScenarioSyntaxError(f"unknown directive {head!r}", lineno, source)
    events.sort(key=lambda ev: ev.t)
    try:
        params = CircuitParams(**circuit_kw)
    except InvalidParameterError as exc:
        raise ScenarioValidationError(f"circuit parameters: {exc}") from None
    return Scenario(params=params, events=tuple(events), **scenario_kw)


def _fmt(value):
    return repr(float(value))


def _event_text(ev):
    if ev.kind == "set_load":
        P, Q = ev.value
        return f"{_fmt(ev.t)} set_load P={_fmt(P)} Q={_fmt(Q)}"
    return f"{_fmt(ev.t)} {ev.kind} {_fmt(ev.value)}"


def serialize_scenario(scenario):
    """
    Canonical text for ``scenario``; ``parse_scenario`` of the result
    reproduces an equal object. ``lambda`` and ``bound`` are written only
    when set explicitly.
    """
    lines = []
    p = scenario.params
    for name, (target, attr) in PARAM_NAMES.items():
        value = getattr(p if target == "params" else scenario, attr)
        if value is None:
            continue
        lines.append(f"param {name} {_fmt(value)}")
    lines.append(f"init vdc {_fmt(scenario.v_dc)}")
    lines.append(f"init vref_amp {_fmt(scenario.vref_amp)}")
    P, Q = scenario.load
    lines.append(f"init load P={_fmt(P)} Q={_fmt(Q)}")
    lines.extend(f"event {_event_text(ev)}" for ev in scenario.events)
    return "\n".join(lines) + "\n"


def _open_for_write(destination):
    path = Path(destination)
    try:
        return path.open("w", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_timeseries(series, destination):
    """Write the 10-column CSV; numbers at 9 significant digits, ``violated`` as 0/1."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in series.columns()]) \
        if len(series) else np.zeros((0, len(TIMESERIES_COLUMNS)))
    fmt = [CSV_FORMAT] * len(TIMESERIES_COLUMNS)
    fmt[TIMESERIES_COLUMNS.index("T")] = "%d"
    fmt[TIMESERIES_COLUMNS.index("violated")] = "%d"
    with _open_for_write(destination) as fh:
        fh.write(",".join(TIMESERIES_COLUMNS) + "\n")
        if len(data):
            np.savetxt(fh, data, fmt=fmt, delimiter=",")


def read_timeseries_csv(path):
    """Header list and float array of a CSV written by this module."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    return header, np.array(rows).reshape(len(rows), len(header))


def write_table(destination, columns, rows, int_columns=()):
    with _open_for_write(destination) as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [str(int(v)) if name in int_columns else CSV_FORMAT % v
                     for name, v in zip(columns, row)]
            fh.write(",".join(cells) + "\n")


def write_soa(grid, destination):
    rows = [(c.v_dc, c.v_peak, c.P, c.Q, c.worst_case_V, c.verdict.margin, c.verdict.satisfied)
            for c in grid.cells]
    write_table(destination, SOA_COLUMNS, rows, int_columns=("satisfied",))


def write_envelope(t, predicted, simulated, destination):
    write_table(destination, ENVELOPE_COLUMNS, zip(t, predicted, simulated))


def digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


def manifest_entries(scenario, cfg, metrics, source_text=None):
    """Ordered ``(key, value)`` pairs describing a completed run."""
    entries = [("tool", f"gfmlimits {__version__}")]
    entries.append(("input_sha256", digest(source_text) if source_text is not None else "none"))
    entries.append(("scenario_sha256", digest(serialize_scenario(scenario))))
    for name, (target, attr) in PARAM_NAMES.items():
        value = getattr(scenario.params if target == "params" else scenario, attr)
        if name == "lambda":
            value = cfg.lam
        elif name == "bound":
            value = "auto" if cfg.bound is None else cfg.bound
        entries.append((f"param.{name}", value if isinstance(value, str) else _fmt(value)))
    entries.append(("derived.a", _fmt(scenario.params.a)))
    entries.append(("init.vdc", _fmt(scenario.v_dc)))
    entries.append(("init.vref_amp", _fmt(scenario.vref_amp)))
    P, Q = scenario.load
    entries.append(("init.load", f"P={_fmt(P)} Q={_fmt(Q)}"))
    entries.append(("events.count", str(len(scenario.events))))
    for i, ev in enumerate(scenario.events):
        entries.append((f"event.{i:03d}", _event_text(ev)))
    if metrics is not None:
        entries.append(("metrics.violation_count", str(len(metrics.violations))))
        for i, (a, b) in enumerate(metrics.violations):
            entries.append((f"metrics.violation.{i:03d}", f"{CSV_FORMAT % a} {CSV_FORMAT % b}"))
        for i, seg in enumerate(metrics.segments):
            entries.append((f"metrics.segment.{i:03d}",
                            f"t_start={CSV_FORMAT % seg.t_start} t_end={CSV_FORMAT % seg.t_end} "
                            f"rms_error={CSV_FORMAT % seg.rms_error} "
                            f"peak_error={CSV_FORMAT % seg.peak_error} "
                            f"f_sw={CSV_FORMAT % seg.switching_frequency} "
                            f"violated={int(seg.violated)}"))
    return entries


def write_manifest(scenario, cfg, metrics, destination, source_text=None, timestamp=None):
    """
    Write ``key = value`` lines. The ``timestamp`` line is the only one that
    differs between repeated runs.
    """
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    entries = manifest_entries(scenario, cfg, metrics, source_text)
    entries.insert(1, ("timestamp", timestamp))
    with _open_for_write(destination) as fh:
        for key, value in entries:
            fh.write(f"{key} = {value}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            key, sep, value = line.rstrip("\n").partition(" = ")
            if sep:
                out[key] = value
    return out


def scenario_from_manifest(manifest):
    """Rebuild the scenario that produced a manifest (dict from :func:`read_manifest`)."""
    lines = []
    for name in PARAM_NAMES:
        value = manifest.get(f"param.{name}")
        if value is None or value == "auto":
            continue
        lines.append(f"param {name} {value}")
    lines.append(f"init vdc {manifest['init.vdc']}")
    lines.append(f"init vref_amp {manifest['init.vref_amp']}")
    lines.append(f"init load {manifest['init.load']}")
    count = int(manifest.get("events.count", "0"))
    lines.extend(f"event {manifest[f'event.{i:03d}']}" for i in range(count))
    return parse_scenario("\n".join(lines) + "\n", source="manifest")


def write_soa_manifest(axes, grid, destination, timestamp=None):
    """``axes`` maps axis names to the definitions as typed, written verbatim."""
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with _open_for_write(destination) as fh:
        fh.write(f"tool = gfmlimits {__version__}\n")
        fh.write(f"timestamp = {timestamp}\n")
        for key, value in axes.items():
            fh.write(f"axis.{key} = {value}\n")
        fh.write(f"cells = {len(grid.cells)}\n")
        fh.write(f"satisfied = {sum(c.verdict.satisfied for c in grid.cells)}\n")
