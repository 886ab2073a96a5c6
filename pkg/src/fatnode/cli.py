"""Command-line entry point: ``fatnode {match,sweep,simulate,calibrate}``.

Exit codes: 0 success, 2 validation error, 3 nothing feasible,
4 under-determined calibration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import (
    ConfigError,
    grid_from_dict,
    jobs_from_list,
    load_json,
    node_from_dict,
    observation_from_dict,
    preset_path,
    profile_from_dict,
    profile_to_dict,
    queue_from_dict,
    sim_from_dict,
)
from .matcher import DescriptorError, pool_match
from .simulator import run, trace_lines
from .sweep import NoFeasibleConfiguration, SweepError, best_configuration, emit_table, format_row, run_sweep
from .workload import ProfileError, UnderdeterminedError, calibrate

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_UNDERDETERMINED = 4


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def manifest(command: str, source: str, raw: bytes, outputs: Sequence[str],
             extra: Optional[dict] = None) -> dict:
    m = {
        "command": command,
        "inputs": [source],
        "outputs": list(outputs),
        "version": __version__,
        "input_sha256": _sha256(raw),
    }
    if extra:
        m.update(extra)
    return m


def _dump(obj) -> bytes:
    return (json.dumps(obj, indent=1, sort_keys=False) + "\n").encode()


def _resolve_input(args) -> tuple[Path, str]:
    if args.preset:
        path = preset_path(args.preset)
        return path, f"preset:{path.stem}"
    if not args.config:
        raise ConfigError("give a config path or --preset NAME")
    return Path(args.config), str(args.config)


def _load(args) -> tuple[dict, bytes, str]:
    path, source = _resolve_input(args)
    data = load_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    return data, path.read_bytes(), source


def cmd_match(args) -> int:
    data, raw, source = _load(args)
    node = node_from_dict(data.get("node"), "node")
    queue = queue_from_dict(data.get("queue"), "queue")
    jobs = jobs_from_list(data.get("jobs", []))
    profile = profile_from_dict(data["profile"]) if data.get("profile") else None
    try:
        result = pool_match(jobs, queue, node, profile)
    except DescriptorError as exc:
        raise ConfigError(str(exc)) from exc
    rejection_lines = "".join(
        json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in result.rejections)
    doc = {
        "allocation": result.allocation.to_dict(),
        "rejections": [r.to_dict() for r in result.rejections],
    }
    if args.out:
        out = Path(args.out)
        log = out.with_suffix(".rejections.jsonl")
        log.write_text(rejection_lines)
        doc = {"manifest": manifest("match", source, raw, [str(out), str(log)])} | doc
        out.write_bytes(_dump(doc))
    else:
        doc = {"manifest": manifest("match", source, raw, ["-"])} | doc
        sys.stdout.write(_dump(doc).decode())
    sizes = [len(p) for p in result.allocation.assigned.values()]
    print(f"allocated {len(sizes)} job(s) using {sum(sizes)} processor(s); "
          f"{len(result.rejections)} rejected", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    data, raw, source = _load(args)
    node = node_from_dict(data.get("node"), "node")
    profile = profile_from_dict(data.get("profile"), "profile")
    grid = grid_from_dict(data.get("grid"), node)
    try:
        result = run_sweep(node, profile, grid, parallel=args.jobs)
    except SweepError as exc:
        raise ConfigError(str(exc)) from exc
    table = emit_table(result, args.format)
    if args.out:
        out = Path(args.out)
        out.write_bytes(table)
        side = Path(str(out) + ".manifest.json")
        side.write_bytes(_dump(manifest(
            "sweep", source, raw, [str(out)],
            {"format": args.format, "output_sha256": _sha256(table)})))
    else:
        sys.stdout.write(table.decode())
    try:
        best = best_configuration(result)
    except NoFeasibleConfiguration as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"best,{format_row(best)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    data, raw, source = _load(args)
    config = sim_from_dict(data)
    trace, report = run(config)
    lines = trace_lines(trace).encode()
    out = Path(args.out) if args.out else None
    trace_path = Path(args.trace) if args.trace else (
        out.with_suffix(".trace.jsonl") if out else None)
    outputs = [str(out) if out else "-"] + ([str(trace_path)] if trace_path else [])
    doc = {
        "manifest": manifest("simulate", source, raw, outputs,
                             {"trace_sha256": _sha256(lines)}),
        "report": report.to_dict(),
    }
    if trace_path:
        trace_path.write_bytes(lines)
    if out:
        out.write_bytes(_dump(doc))
    else:
        sys.stdout.write(_dump(doc).decode())
    print(f"throughput {report.throughput:.6f} ev/min, {report.total_events} events, "
          f"span {report.span:.3f} min", file=sys.stderr)
    return EXIT_OK


def _fit_specs(data: dict) -> list[dict]:
    if "fits" in data:
        fits = data["fits"]
        if not isinstance(fits, list):
            raise ConfigError("fits: expected an array")
        return fits
    return [data]


def cmd_calibrate(args) -> int:
    data, raw, source = _load(args)
    fits_out = []
    for k, fit in enumerate(_fit_specs(data)):
        where = f"fits[{k}]"
        if not isinstance(fit, dict):
            raise ConfigError(f"{where}: expected an object")
        node = node_from_dict(fit.get("node"), f"{where}.node")
        profile = profile_from_dict(fit.get("profile"), f"{where}.profile")
        free = fit.get("free", ["single_thread_rate"])
        if not isinstance(free, list) or not all(isinstance(f, str) for f in free):
            raise ConfigError(f"{where}.free: expected an array of parameter names")
        obs_raw = fit.get("observations", [])
        if not isinstance(obs_raw, list):
            raise ConfigError(f"{where}.observations: expected an array")
        obs = [observation_from_dict(o, f"{where}.observations[{j}]") for j, o in enumerate(obs_raw)]
        if not obs:
            raise UnderdeterminedError(free, 0)
        try:
            res = calibrate(profile, obs, node, free)
        except ProfileError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        fits_out.append({
            "name": fit.get("name", f"fit{k}"),
            "free": list(res.free),
            "profile": profile_to_dict(res.profile),
            "relative_errors": list(res.relative_errors),
            "residual": res.residual,
            "max_relative_error": res.max_relative_error,
        })
    outputs = [args.out] if args.out else ["-"]
    doc = {"manifest": manifest("calibrate", source, raw, outputs), "fits": fits_out}
    if args.out:
        Path(args.out).write_bytes(_dump(doc))
    else:
        sys.stdout.write(_dump(doc).decode())
    for f in fits_out:
        print(f"{f['name']}: max relative error {f['max_relative_error']:.3e}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fatnode", description="Fat-node matching, throughput sweeps and simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", nargs="?", help="JSON config file")
        p.add_argument("--preset", metavar="NAME", help="use a bundled preset instead of a file")
        p.add_argument("--out", metavar="PATH", help="output path (default: stdout)")

    p = sub.add_parser("match", help="partition a node among a job queue")
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("sweep", help="evaluate all instances x workers configurations")
    common(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1, help="evaluation threads")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run the discrete-event pilot simulation")
    common(p)
    p.add_argument("--trace", metavar="PATH", help="trace output (default: <out>.trace.jsonl)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit profile rate parameters to observations")
    common(p)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnderdeterminedError as exc:
        print(f"error: under-determined: {exc}", file=sys.stderr)
        return EXIT_UNDERDETERMINED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
