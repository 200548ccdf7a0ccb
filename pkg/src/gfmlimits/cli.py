"""Command-line entry point: ``simulate``, ``sweep``, ``check`` and ``envelope``."""
from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

import numpy as np

from .boundary import (CALIBRATED_DRIFT_FRACTION, EnvelopeParams, envelope_magnitude,
                       node_min_bound, safe_operating_area, steady_state_verdict)
from .circuit import CircuitParams, build_load_from_power
from .errors import GfmError, SimulationDivergedError
from .scenario_io import (parse_scenario, write_envelope, write_manifest, write_soa,
                          write_soa_manifest, write_timeseries)
from .simulation import run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3

# argparse only recognizes "-20" and "-2.5" as negative numbers; accept
# exponent forms such as "-20e3" too
_NEGATIVE_NUMBER = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")


class UsageError(GfmError, ValueError):
    pass


def parse_range(text):
    """
    ``a:b:step`` -> ``[a, a+step, ...]`` up to and including ``b`` (within a
    small tolerance). A bare number is a one-element range.
    """
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"malformed range {text!r}") from None
    if len(values) == 1:
        return values
    if len(values) != 3:
        raise UsageError(f"range must be a:b:step, got {text!r}")
    a, b, step = values
    if not all(math.isfinite(v) for v in values) or step <= 0:
        raise UsageError(f"range step must be positive in {text!r}")
    if b < a:
        raise UsageError(f"inverted range {text!r}")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(n)]


def _params(args):
    return CircuitParams(L_f=args.Lf, C_f=args.Cf, f_sw=args.fsw)


def _load_scenario(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, source=str(path)), text


def cmd_simulate(args):
    scenario, text = _load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = scenario.controller_config()
    series, metrics = run(scenario, cfg)
    write_timeseries(series, out / "timeseries.csv")
    write_manifest(scenario, cfg, metrics, out / "manifest.txt", source_text=text)
    for i, seg in enumerate(metrics.segments):
        print(f"segment={i} t_start={seg.t_start:.6g} t_end={seg.t_end:.6g} "
              f"rms_error={seg.rms_error:.6g} peak_error={seg.peak_error:.6g} "
              f"f_sw={seg.switching_frequency:.6g} violated={'yes' if seg.violated else 'no'}")
    print(" ".join([f"violations={len(metrics.violations)}"]
                   + [f"interval={a:.6g}:{b:.6g}" for a, b in metrics.violations]))
    return EXIT_OK


def cmd_sweep(args):
    v_dc = parse_range(args.vdc)
    v_ref = parse_range(args.vref)
    qs = list(args.Q) + list(args.Q2 or [])
    ps = list(args.P)
    if len(ps) == 1:
        ps = ps * len(qs)
    if len(ps) != len(qs):
        raise UsageError("give one --P or one --P per --Q")
    params = _params(args)
    omega = 2 * math.pi * args.fgrid
    grid = safe_operating_area(v_dc, v_ref, list(zip(ps, qs)), omega, params,
                               v_rated_peak=args.vrated)
    out = Path(args.out)
    write_soa(grid, out)
    axes = {"vdc": args.vdc, "vref": args.vref, "P": " ".join(map(str, args.P)),
            "Q": " ".join(map(str, qs)), "vrated": args.vrated, "Lf": args.Lf, "Cf": args.Cf,
            "fgrid": args.fgrid}
    write_soa_manifest(axes, grid, out.with_name(out.stem + ".manifest.txt"))
    n_ok = sum(c.verdict.satisfied for c in grid.cells)
    print(f"cells={len(grid.cells)} satisfied={n_ok} violated={len(grid.cells) - n_ok}")
    return EXIT_OK


def cmd_check(args):
    for name in ("vdc", "vref", "Lf", "Cf", "fgrid", "vrated"):
        value = getattr(args, name)
        if not (math.isfinite(value) and value > 0):
            raise UsageError(f"--{name} must be positive")
    params = _params(args)
    omega = 2 * math.pi * args.fgrid
    load = build_load_from_power(args.P, args.Q, args.vrated, omega)
    verdict, worst = steady_state_verdict(args.vdc, args.vref, load, omega, params)
    print(f"lhs_V={args.vdc:.6g} rhs_V={worst:.6g} lhs={verdict.lhs:.6g} rhs={verdict.rhs:.6g} "
          f"margin={verdict.margin:.6g} verdict={'SATISFIED' if verdict.satisfied else 'VIOLATED'}")
    return EXIT_OK


def envelope_series(scenario, series, metrics, k=CALIBRATED_DRIFT_FRACTION):
    """Predicted envelope at every record of ``series`` (violation windows from ``metrics``)."""
    cfg = scenario.controller_config()
    t = series.t
    predicted = series.bound / cfg.lam
    err = series.x_err
    for a, b in metrics.violations:
        i0 = int(np.searchsorted(t, a))
        load = scenario.make_load(*_load_at(scenario, a))
        H_b = node_min_bound(cfg, series.v_dc[i0], _amp_at(scenario, a), load, scenario.omega,
                             scenario.params)
        env = EnvelopeParams(k=k, delta_t=b - a, t_0=a, J=1, H_b=H_b)
        window = (t >= a) & (t < b)
        predicted = np.where(window, envelope_magnitude(
            env, cfg, series.v_dc[i0], err[i0], scenario.params, t,
            bound=max(series.bound[i0], H_b)), predicted)
    return predicted


def _load_at(scenario, t):
    load = scenario.load
    for ev in scenario.events:
        if ev.t <= t and ev.kind == "set_load":
            load = ev.value
    return load


def _amp_at(scenario, t):
    amp = scenario.vref_amp
    for ev in scenario.events:
        if ev.t <= t and ev.kind == "set_vref_amp":
            amp = ev.value
    return amp


def cmd_envelope(args):
    scenario, _ = _load_scenario(args.scenario)
    series, metrics = run(scenario)
    out = Path(args.out)
    if len(series) == 0:
        write_envelope([], [], [], out)
        return EXIT_OK
    predicted = envelope_series(scenario, series, metrics, k=args.k)
    write_envelope(series.t, predicted, np.abs(series.x_err), out)
    print(f"records={len(series)} windows={len(metrics.violations)}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gfmlimits",
        description="Grid-forming inverter controllability boundary tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    def circuit_options(p):
        p.add_argument("--Lf", type=float, default=0.5e-3)
        p.add_argument("--Cf", type=float, default=20e-6)
        p.add_argument("--fsw", type=float, default=20e3)
        p.add_argument("--fgrid", type=float, default=50.0)
        p.add_argument("--vrated", type=float, default=120.0,
                       help="peak voltage at which P/Q are synthesized")

    p = sub.add_parser("sweep", help="steady-state safe operating area")
    p.add_argument("--vdc", required=True, help="a:b:step")
    p.add_argument("--vref", required=True, help="a:b:step")
    p.add_argument("--P", type=float, nargs="+", required=True)
    p.add_argument("--Q", type=float, nargs="+", required=True)
    p.add_argument("--Q2", type=float, nargs="+")
    p.add_argument("--out", required=True)
    circuit_options(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="steady-state verdict for one operating point")
    p.add_argument("--vdc", type=float, required=True)
    p.add_argument("--vref", type=float, required=True)
    p.add_argument("--P", type=float, required=True)
    p.add_argument("--Q", type=float, required=True)
    circuit_options(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("envelope", help="predicted vs simulated tracking error")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=float, default=CALIBRATED_DRIFT_FRACTION)
    p.set_defaults(func=cmd_envelope)
    for each in (parser, *sub.choices.values()):
        each._negative_number_matcher = _NEGATIVE_NUMBER
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationDivergedError as exc:
        print(f"error: simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (GfmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
