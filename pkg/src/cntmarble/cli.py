"""Command-line entry point ``cntlm``.

Every output file is a pure function of the configuration, seed and dt, so
repeated invocations produce byte-identical files.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .device import DeviceKind, DeviceParams, default_params
from .harness import (CONTROL_NOISE_SD, DEFAULT_BOUNDS, DEFAULT_CONTACT_RANGE, PAPER_TARGET,
                      CalibrationTarget, EnsembleSpec, build_tables, calibrate,
                      device_metrics, ensemble_from_traces, format_report, run_ensemble)
from .plots import render_plots
from .protocol import (SweepSpec, Trace, loop_area, paper_protocol, read_trace_csv,
                       run_sweep, write_trace_csv)

CONTROL_KINDS = (DeviceKind.WATER_LM, DeviceKind.CNT_FREE_LIQUID)


# --- configuration -------------------------------------------------------------

def _coerce(field: dataclasses.Field, text: str):
    if field.type in ("int", int):
        return int(text)
    return float(text)


def load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is not None:
        if not cfg.read(path):
            raise SystemExit(f"config file not found: {path}")
    return cfg


def device_from_config(cfg: configparser.ConfigParser, kind: DeviceKind) -> DeviceParams:
    """Default parameters for ``kind`` overridden by the ``[device]`` section."""
    params = default_params(kind)
    if not cfg.has_section("device"):
        return params
    fields = {f.name: f for f in dataclasses.fields(DeviceParams)}
    changes = {}
    for key, text in cfg.items("device"):
        if key == "kind":
            continue
        if key not in fields:
            raise SystemExit(f"unknown [device] key {key!r}")
        changes[key] = _coerce(fields[key], text)
    return params.replace(**changes)


def _kind(cfg: configparser.ConfigParser, section: str) -> DeviceKind:
    return DeviceKind.parse(cfg.get(section, "kind", fallback=DeviceKind.CNT_LM.value))


def ensemble_from_config(cfg: configparser.ConfigParser, seed: int | None,
                         kind: DeviceKind | None = None,
                         noise_sd: float | None = None) -> EnsembleSpec:
    kind = _kind(cfg, "ensemble") if kind is None else kind
    sec = "ensemble"
    lo = cfg.getfloat(sec, "contact_low", fallback=DEFAULT_CONTACT_RANGE[0])
    hi = cfg.getfloat(sec, "contact_high", fallback=DEFAULT_CONTACT_RANGE[1])
    return EnsembleSpec(
        n_devices=cfg.getint(sec, "n_devices", fallback=10),
        kind=kind,
        seed=seed if seed is not None else cfg.getint(sec, "seed", fallback=42),
        base_params=device_from_config(cfg, kind),
        contact_log_range=(lo, hi),
        noise_sd=cfg.getfloat(sec, "noise_sd", fallback=0.0) if noise_sd is None else noise_sd,
    )


def target_from_config(cfg: configparser.ConfigParser) -> CalibrationTarget:
    sec = "calibration"
    if not cfg.has_section(sec):
        return PAPER_TARGET
    t = PAPER_TARGET
    weights = cfg.get(sec, "weights", fallback=None)
    band = t.ratio_band
    if cfg.has_option(sec, "ratio_low") or cfg.has_option(sec, "ratio_high"):
        band = (cfg.getfloat(sec, "ratio_low", fallback=band[0] if band else 0.0),
                cfg.getfloat(sec, "ratio_high", fallback=band[1] if band else float("inf")))
    return CalibrationTarget(
        cfg.getfloat(sec, "mean_pc_s1s2", fallback=t.mean_pc_s1s2),
        cfg.getfloat(sec, "mean_pc_s1s4", fallback=t.mean_pc_s1s4),
        cfg.getfloat(sec, "mean_onset_pc", fallback=t.mean_onset_pc),
        tuple(float(w) for w in weights.split(",")) if weights else t.weights,
        band,
    )


def _bounds_from_config(cfg: configparser.ConfigParser) -> dict[str, tuple[float, float]]:
    bounds = {}
    if cfg.has_section("calibration"):
        for key, text in cfg.items("calibration"):
            if key.startswith("bound_"):
                lo, hi = (float(x) for x in text.split(","))
                bounds[key[len("bound_"):]] = (lo, hi)
    return bounds or dict(DEFAULT_BOUNDS)


# --- output helpers ----------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _trace_json(trace: Trace) -> dict:
    return {"t_s": trace.t.tolist(), "v_volt": trace.v.tolist(), "i_amp": trace.i.tolist(),
            "r_ohm": trace.r.tolist(), "phase": trace.phase.tolist(),
            "pulse": trace.pulse.tolist()}


def _write_trace(trace: Trace, out: Path, stem: str, fmt: str) -> Path:
    if fmt == "json":
        path = out / f"{stem}.json"
        _dump_json(_trace_json(trace), path)
    else:
        path = out / f"{stem}.csv"
        write_trace_csv(trace, path)
    return path


def _read_trace(path: Path) -> Trace:
    protocol = paper_protocol()
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        trace = Trace(d["t_s"], d["v_volt"], d["i_amp"], d["r_ohm"], d["phase"], d["pulse"])
    else:
        trace = read_trace_csv(path)
    # traces shaped like the standard protocol get its phase start times back
    if len(trace) == protocol.n_samples and trace.phases() == list(range(len(protocol.phases))):
        trace.phase_starts = protocol.phase_starts()
    return trace


def _write_report(report, out: Path) -> None:
    (out / "report.txt").write_text(format_report(report))
    _dump_json(report.as_dict(), out / "report.json")


def params_to_ini(params: DeviceParams) -> str:
    lines = ["[device]"]
    for f in dataclasses.fields(DeviceParams):
        value = getattr(params, f.name)
        lines.append(f"{f.name} = {value!r}")
    return "\n".join(lines) + "\n"


# --- subcommands -------------------------------------------------------------------

def cmd_run(args, cfg) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    protocol = paper_protocol()
    spec = ensemble_from_config(cfg, args.seed)
    result = run_ensemble(spec, protocol, args.dt)
    for k, trace in enumerate(result.traces):
        _write_trace(trace, out, f"trace_{k:03d}", args.format)
    controls = []
    if not args.no_controls:
        for kind in CONTROL_KINDS:
            noise = CONTROL_NOISE_SD if kind is DeviceKind.WATER_LM else 0.0
            controls.append(run_ensemble(ensemble_from_config(cfg, args.seed, kind, noise),
                                         protocol, args.dt))
    report = build_tables(result, controls)
    _write_report(report, out)
    if len(result):
        (out / "resistance_vs_time.svg").write_text(
            render_plots(result.traces[0], "resistance_vs_time"))
    sys.stdout.write(format_report(report))
    return 0


def cmd_sweep(args, cfg) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = _kind(cfg, "device")
    params = device_from_config(cfg, kind)
    sec = "sweep"
    sweep = SweepSpec(v_max=cfg.getfloat(sec, "v_max", fallback=3.0),
                      steps_per_leg=cfg.getint(sec, "steps_per_leg", fallback=60),
                      dwell=cfg.getfloat(sec, "dwell", fallback=0.1))
    trace = run_sweep(params, kind, sweep, args.dt)
    _write_trace(trace, out, "sweep", args.format)
    (out / "iv_loop.svg").write_text(render_plots(trace, "iv_loop"))
    print(f"loop area: {loop_area(trace):.6g} V*A over {len(trace)} samples")
    return 0


def _collect(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.iterdir()
                            if q.name.startswith("trace_") and q.suffix in (".csv", ".json"))
        else:
            files.append(p)
    if not files:
        raise SystemExit("no trace files found")
    return files


def cmd_analyze(args, cfg) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = [_read_trace(p) for p in _collect(args.traces)]
    report = build_tables(ensemble_from_traces(traces, DeviceKind.parse(args.kind)))
    _write_report(report, out)
    if args.format == "json":
        sys.stdout.write(json.dumps(report.as_dict(), sort_keys=True, indent=2,
                                    default=_json_default) + "\n")
    else:
        sys.stdout.write(format_report(report))
    return 0


def cmd_report(args, cfg) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = _collect(args.traces)
    traces = [_read_trace(p) for p in files]
    report = build_tables(ensemble_from_traces(traces, DeviceKind.parse(args.kind)))
    _write_report(report, out)
    for path, trace in zip(files, traces):
        if len(trace):
            (out / f"{path.stem}.svg").write_text(render_plots(trace, "resistance_vs_time"))
    sys.stdout.write(format_report(report))
    return 0


def cmd_calibrate(args, cfg) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = target_from_config(cfg)
    init = device_from_config(cfg, DeviceKind.CNT_LM)
    budget = args.budget if args.budget is not None else cfg.getint(
        "calibration", "budget", fallback=200)
    res = calibrate(target, init, budget, bounds=_bounds_from_config(cfg), dt=args.dt)
    (out / "calibrated.ini").write_text(params_to_ini(res.params))
    m = device_metrics(res.params, dt=args.dt)
    _dump_json({"loss": res.loss, "iterations": res.iterations,
                "evaluations": res.evaluations, "history": list(res.history),
                "params": dataclasses.asdict(res.params),
                "metrics": dataclasses.asdict(m),
                "target": dataclasses.asdict(target)}, out / "calibration.json")
    print(f"loss {res.loss:.6g} after {res.iterations} iterations")
    print(params_to_ini(res.params), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [device], [ensemble], [sweep] "
                                         "and [calibration] sections")
    common.add_argument("--seed", type=int, help="ensemble seed (unsigned 64-bit)")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="trace output format")
    common.add_argument("--dt", type=float, default=0.01, help="integration step in seconds")

    parser = argparse.ArgumentParser(prog="cntlm",
                                     description="Simulate and analyse CNT liquid-marble devices.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="ensemble under the four-phase protocol")
    p.add_argument("--no-controls", action="store_true",
                   help="skip the water and free-liquid control ensembles")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="I-V staircase sweep of one device")
    p.set_defaults(func=cmd_sweep)
    for name, func, text in (("analyze", cmd_analyze, "statistics from trace files"),
                             ("report", cmd_report, "tables and plots from trace files")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("traces", nargs="+", help="trace files or directories of trace_* files")
        p.add_argument("--kind", default=DeviceKind.CNT_LM.value,
                       choices=[k.value for k in DeviceKind])
        p.set_defaults(func=func)
    p = sub.add_parser("calibrate", parents=[common], help="fit the dynamic constants")
    p.add_argument("--budget", type=int, help="simplex iterations (default 200)")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise SystemExit("--seed must be an unsigned 64-bit integer")
    if not args.dt > 0:
        raise SystemExit("--dt must be positive")
    return args.func(args, load_config(args.config))


if __name__ == "__main__":
    sys.exit(main())
