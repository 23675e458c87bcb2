"""``costlab`` command line.

Subcommands: analyze, estimate, ingest, pareto, calibrate, sweep, lint,
profiles, synth. ``--format json`` wraps every payload in an envelope::

    {"tool_version", "subcommand", "inputs": [{"path", "sha256"}], "payload", "warnings"}

Exit codes: 0 success, 1 usage / IO / parse errors, 2 lint warnings.
Plot data is written as CSV files (``pareto.csv``, ``delta_by_alignment.csv``)
into the ``-o`` directory where a subcommand supports it.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .hwmodel import (
    CANONICAL_CONFIGS,
    OptimizationConfig,
    ProfileError,
    find_profile,
    fit_check,
    estimate,
    list_profiles,
    profile_to_dict,
    save_profile,
)
from .lint import has_warnings, lint_model
from .measurelab import (
    DegenerateFitError,
    ParetoPoint,
    calibrate,
    empirical_delta,
    fit_latency_energy,
    load_log,
    pareto_front,
    points_from_records,
    synthesize_log,
    write_log,
)
from .model_ir import ModelFormatError, ModelValidationError, load_model
from .opcount import count_model, footprint
from .sweepgen import FAMILIES, SweepSpec, fixtures, generate, write_sweep

EXIT_OK, EXIT_ERROR, EXIT_WARNINGS = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects inputs and warnings for the output envelope."""

    def __init__(self, subcommand: str, out, err):
        self.subcommand = subcommand
        self.out = out
        self.err = err
        self.inputs: list[dict] = []
        self.warnings: list[str] = []

    def track(self, path) -> None:
        if Path(path).is_file():
            self.inputs.append({"path": str(path), "sha256": _sha256(path)})
        else:
            self.inputs.append({"path": str(path), "sha256": None})

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def envelope(self, payload) -> dict:
        return {
            "tool_version": __version__,
            "subcommand": self.subcommand,
            "inputs": self.inputs,
            "payload": payload,
            "warnings": self.warnings,
        }

    def emit_json(self, payload) -> None:
        self.out.write(json.dumps(self.envelope(payload), indent=2, sort_keys=True) + "\n")

    def emit_warnings(self) -> None:
        for w in self.warnings:
            self.err.write(f"warning: {w}\n")


def render_table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[_cell(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(v.rjust(w) if n and _numeric(v) else v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}" if abs(value) < 1e-3 and value else f"{value:,.3f}"
    if isinstance(value, int) and not isinstance(value, bool):
        return f"{value:,}"
    return "" if value is None else str(value)


def _numeric(text: str) -> bool:
    return text.replace(",", "").replace(".", "", 1).lstrip("-").isdigit()


def _model(run: Run, ref: str):
    """A model file path, or a bundled fixture name (lenet, resnet20)."""
    if Path(ref).is_file():
        run.track(ref)
        return load_model(ref)
    bundled = fixtures()
    if ref in bundled:
        run.inputs.append({"path": f"fixture:{ref}", "sha256": None})
        return bundled[ref]
    raise UsageError(f"no such model file or fixture: {ref}")


def _profile(run: Run, ref: str):
    if Path(ref).is_file():
        run.track(ref)
    profile = find_profile(ref)
    if not profile.calibrated:
        run.warn(f"profile {profile.name} is not calibrated against measurements; power values are placeholders")
    return profile


# --- analyze ---------------------------------------------------------------

def _analyze_payload(model) -> dict:
    counts = count_model(model)
    total_maccs = counts.total.maccs
    rows = []
    cumulative = 0
    for i, (layer, c) in enumerate(zip(model.layers, counts.per_layer)):
        cumulative += c.maccs
        rows.append(
            {
                "index": i,
                "type": layer.type_name,
                "output_shape": str(counts.shapes[i + 1]),
                "params": c.params,
                "maccs": c.maccs,
                "flops": c.flops,
                "cumulative_pct": round(100 * cumulative / total_maccs, 6) if total_maccs else 0.0,
            }
        )
    fp = {
        str(bits): {
            "weight_bytes": r.weight_bytes,
            "bias_bytes": r.bias_bytes,
            "overhead_bytes": r.overhead_bytes,
            "total_kib": r.total_kib,
        }
        for bits in (32, 8)
        for r in [footprint(model, bits)]
    }
    return {
        "model": model.name,
        "input_shape": str(model.input),
        "layers": rows,
        "total": {"params": counts.total.params, "maccs": total_maccs, "flops": counts.total.flops},
        "footprint": fp,
    }


def cmd_analyze(args, run: Run) -> int:
    models = [_model(run, ref) for ref in args.models]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        payloads = list(pool.map(_analyze_payload, models))
    if args.format == "json":
        run.emit_json(payloads[0] if len(payloads) == 1 else payloads)
        return EXIT_OK
    for p in payloads:
        run.out.write(f"{p['model']}  input {p['input_shape']}\n")
        rows = [
            [r["index"], r["type"], r["output_shape"], r["params"], r["maccs"], r["flops"], f"{r['cumulative_pct']:.2f}"]
            for r in p["layers"]
        ]
        t = p["total"]
        rows.append(["", "total", "", t["params"], t["maccs"], t["flops"], "100.00" if t["maccs"] else "0.00"])
        run.out.write(render_table(["#", "type", "output", "params", "MACCs", "FLOPs", "cum%"], rows))
        fp = p["footprint"]
        run.out.write(
            f"footprint: {fp['32']['total_kib']:.2f} KiB float32, {fp['8']['total_kib']:.2f} KiB int8\n\n"
        )
    return EXIT_OK


# --- estimate ----------------------------------------------------------------

def _config_from_args(args, profile) -> OptimizationConfig:
    fpu = profile.has_fpu if args.fpu is None else args.fpu
    if args.cmsis and not args.quantized:
        raise UsageError("--cmsis requires --quantized")
    return OptimizationConfig(quantized=args.quantized, cmsis_kernels=args.cmsis, fpu_enabled=fpu)


def cmd_estimate(args, run: Run) -> int:
    model = _model(run, args.model)
    profile = _profile(run, args.profile)
    config = _config_from_args(args, profile)
    if config.fpu_enabled and not config.quantized and not profile.has_fpu:
        run.warn(f"{profile.name} has no FPU; estimating as if one were present")
    est = estimate(model, profile, config)
    total = est.total_latency_ms
    speedups = {}
    for label, other in CANONICAL_CONFIGS.items():
        speedups[label] = estimate(model, profile, other).total_latency_ms / total if total else None
    fit = fit_check(model, profile, config)
    payload = {
        "model": model.name,
        "profile": profile.name,
        "config": {"label": config.label, "quantized": config.quantized, "cmsis": config.cmsis_kernels, "fpu": config.fpu_enabled},
        "layers": [
            {
                "index": l.index,
                "layer_class": l.layer_class.value if l.layer_class else None,
                "alignment_class": l.alignment_class.value if l.alignment_class else None,
                "maccs": l.maccs,
                "delta_used_ns_per_op": l.delta_used_ns_per_op,
                "latency_ms": l.latency_ms,
                "energy_mj": l.energy_mj,
            }
            for l in est.per_layer
        ],
        "total_latency_ms": total,
        "total_energy_mj": est.total_energy_mj,
        # latency of each canonical config divided by this config's latency
        "speedup": speedups,
        "fit": {
            "fits": fit.fits,
            "flash_needed": fit.flash_needed,
            "ram_needed": fit.ram_needed,
            "flash_available": fit.flash_available,
            "ram_available": fit.ram_available,
            "reason": fit.reason,
        },
    }
    if not fit.fits:
        run.warn(f"model does not fit {profile.name}: {fit.reason}")
    if args.format == "json":
        run.emit_json(payload)
        return EXIT_OK
    run.out.write(f"{model.name} on {profile.name}, config {config.label}\n")
    rows = [
        [l["index"], l["layer_class"] or "-", l["alignment_class"] or "-", l["maccs"], l["delta_used_ns_per_op"], l["latency_ms"], l["energy_mj"]]
        for l in payload["layers"]
        if l["layer_class"]
    ]
    rows.append(["", "total", "", sum(l["maccs"] for l in payload["layers"]), "", total, est.total_energy_mj])
    run.out.write(render_table(["#", "class", "align", "MACCs", "ns/MACC", "latency ms", "energy mJ"], rows))
    run.out.write(
        "speedup vs " + ", ".join(f"{k}: {v:.2f}x" for k, v in speedups.items() if v is not None) + "\n"
    )
    run.out.write(f"fits: {fit.fits}" + (f" ({fit.reason})" if fit.reason else "") + "\n")
    run.emit_warnings()
    return EXIT_OK


# --- ingest ------------------------------------------------------------------

def _write_csv(path: Path, headers, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(headers)
        writer.writerows(rows)


def _fit_dict(records, grouping, run: Run):
    try:
        fit = fit_latency_energy(records, grouping)
    except DegenerateFitError as exc:
        run.warn(f"{grouping} regression: {exc}")
        return None
    return {"slope": fit.slope, "intercept": fit.intercept, "pearson_r": fit.pearson_r, "n": fit.n, "degenerate": fit.degenerate}


def cmd_ingest(args, run: Run) -> int:
    run.track(args.log)
    records = load_log(args.log)
    model = _model(run, args.model)
    report = empirical_delta(records, model)
    payload = {
        "model": model.name,
        "records": len(records),
        "delta_by_layer": [
            {
                "run_id": r.run_id,
                "mcu": r.mcu,
                "config": r.config,
                "layer_index": r.layer_index,
                "layer_class": r.layer_class.value,
                "alignment": r.alignment.value,
                "maccs": r.maccs,
                "latency_ms": r.latency_ms,
                "delta_ns_per_op": r.delta_ns_per_op,
            }
            for r in report.rows
        ],
        "delta_by_alignment": [
            {
                "mcu": g.mcu,
                "config": g.config,
                "layer_class": g.layer_class.value,
                "alignment": g.alignment.value,
                "n": g.n,
                "mean_delta_ns_per_op": g.mean_delta_ns_per_op,
                "min_delta_ns_per_op": g.min_delta_ns_per_op,
                "max_delta_ns_per_op": g.max_delta_ns_per_op,
            }
            for g in report.groups
        ],
        "latency_energy_fit": {
            "per-layer": _fit_dict(records, "per-layer", run),
            "per-model": _fit_dict(records, "per-model", run),
        },
    }
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        rows = payload["delta_by_layer"]
        _write_csv(out / "delta_by_layer.csv", list(rows[0]) if rows else [], [list(r.values()) for r in rows])
        groups = payload["delta_by_alignment"]
        _write_csv(out / "delta_by_alignment.csv", list(groups[0]) if groups else [], [list(g.values()) for g in groups])
        _write_csv(
            out / "latency_energy.csv",
            ["run_id", "mcu", "config", "layer_index", "latency_ms", "energy_mj"],
            [[r.run_id, r.mcu, r.config.label, r.layer_index, r.latency_ms, r.energy_mj] for r in records],
        )
    if args.format == "json":
        run.emit_json(payload)
        return EXIT_OK
    run.out.write(f"{len(records)} records for {model.name}\n")
    run.out.write(
        render_table(
            ["mcu", "config", "class", "align", "n", "mean ns/MACC"],
            [[g["mcu"], g["config"], g["layer_class"], g["alignment"], g["n"], g["mean_delta_ns_per_op"]] for g in payload["delta_by_alignment"]],
        )
    )
    for grouping, fit in payload["latency_energy_fit"].items():
        if fit:
            run.out.write(
                f"{grouping}: energy = {fit['slope']:.6g} * latency + {fit['intercept']:.6g}  (r = {fit['pearson_r']:.4f}, n = {fit['n']})\n"
            )
    run.emit_warnings()
    return EXIT_OK


# --- pareto -------------------------------------------------------------------

def _points_from_json(doc) -> list[ParetoPoint]:
    docs = doc if isinstance(doc, list) else [doc]
    points = []
    for d in docs:
        if isinstance(d, dict) and "payload" in d:
            d = d["payload"]
        if isinstance(d, dict) and "total_latency_ms" in d:
            points.append(ParetoPoint(f"{d['profile']} {d['config']['label']}", d["total_latency_ms"], d["total_energy_mj"]))
        elif isinstance(d, dict) and {"label", "latency_ms", "energy_mj"} <= set(d):
            points.append(ParetoPoint(d["label"], d["latency_ms"], d["energy_mj"]))
        else:
            raise UsageError("JSON input must hold estimate envelopes or {label, latency_ms, energy_mj} points")
    return points


def cmd_pareto(args, run: Run) -> int:
    run.track(args.input)
    path = Path(args.input)
    if path.suffix.lower() == ".json":
        points = _points_from_json(json.loads(path.read_text(encoding="utf-8")))
    else:
        points = points_from_records(load_log(path))
    front = pareto_front(points)
    on_front = {id(p) for p in front}
    payload = {
        "points": [
            {"label": p.label, "latency_ms": p.latency_ms, "energy_mj": p.energy_mj, "on_front": id(p) in on_front}
            for p in sorted(points, key=lambda p: (p.latency_ms, p.energy_mj, p.label))
        ],
        "front": [p.label for p in front],
    }
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(
            out / "pareto.csv",
            ["label", "latency_ms", "energy_mj", "on_front"],
            [[p["label"], p["latency_ms"], p["energy_mj"], int(p["on_front"])] for p in payload["points"]],
        )
    if args.format == "json":
        run.emit_json(payload)
        return EXIT_OK
    run.out.write(
        render_table(
            ["label", "latency ms", "energy mJ", "front"],
            [[p["label"], p["latency_ms"], p["energy_mj"], "*" if p["on_front"] else ""] for p in payload["points"]],
        )
    )
    return EXIT_OK


# --- calibrate ---------------------------------------------------------------

def cmd_calibrate(args, run: Run) -> int:
    run.track(args.log)
    records = load_log(args.log)
    model = _model(run, args.model)
    profile = find_profile(args.profile)
    if Path(args.profile).is_file():
        run.track(args.profile)
    report = calibrate(records, model, profile)
    save_profile(report.profile, args.output)
    fit = report.energy_fit
    payload = {
        "profile": profile_to_dict(report.profile),
        "fitted": list(report.fitted),
        "untouched": list(report.untouched),
        "order_adjusted": list(report.order_adjusted),
        "mape_percent": report.mape_percent,
        "n_records": report.n_records,
        "energy_fit": None
        if fit is None
        else {"slope": fit.slope, "intercept": fit.intercept, "pearson_r": fit.pearson_r, "n": fit.n},
        "output": str(args.output),
    }
    if fit is not None and fit.intercept != 0:
        run.warn(
            f"energy intercept {fit.intercept:.6g} mJ is reported but not used; the estimator keeps energy proportional to latency"
        )
    if report.untouched:
        run.warn("cells without data kept their previous values: " + ", ".join(report.untouched))
    if args.format == "json":
        run.emit_json(payload)
        return EXIT_OK
    run.out.write(f"calibrated {len(report.fitted)} parameters from {report.n_records} layer records -> {args.output}\n")
    run.out.write(f"post-calibration MAPE: {report.mape_percent:.3f} %\n")
    run.emit_warnings()
    return EXIT_OK


# --- sweep -----------------------------------------------------------------

def cmd_sweep(args, run: Run) -> int:
    spec = SweepSpec(args.family, getattr(args, "from"), args.to, args.step)
    result = generate(spec)
    manifest = write_sweep(result, args.output)
    payload = {
        "family": result.family,
        "benchmark_layer": result.benchmark_index,
        "manifest": str(manifest),
        "rows": result.manifest,
    }
    if args.format == "json":
        run.emit_json(payload)
        return EXIT_OK
    run.out.write(f"wrote {len(result.models)} models and {manifest}\n")
    return EXIT_OK


# --- lint -------------------------------------------------------------------

def cmd_lint(args, run: Run) -> int:
    model = _model(run, args.model)
    profile = _profile(run, args.profile) if args.profile else None
    findings = lint_model(model, profile)
    payload = {
        "model": model.name,
        "profile": profile.name if profile else None,
        "findings": [
            {
                "rule_id": f.rule_id,
                "layer_index": f.layer_index,
                "severity": f.severity,
                "message": f.message,
                "estimated_gain": f.estimated_gain,
                "suggestion": f.suggestion,
            }
            for f in findings
        ],
    }
    if args.format == "json":
        run.emit_json(payload)
    else:
        if not findings:
            run.out.write("no findings\n")
        for f in findings:
            where = "model" if f.layer_index < 0 else f"layer {f.layer_index}"
            gain = f" [est. gain {f.estimated_gain:.3f}x]" if f.estimated_gain else ""
            run.out.write(f"{f.severity:4} {f.rule_id} {where}: {f.message}{gain}\n")
    return EXIT_WARNINGS if has_warnings(findings) else EXIT_OK


# --- profiles / synth -------------------------------------------------------

def cmd_profiles(args, run: Run) -> int:
    if args.show:
        profiles = [find_profile(args.show)]
    else:
        profiles = list_profiles()
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        for p in profiles:
            save_profile(p, out / f"{p.name.lower()}.json")
    payload = [profile_to_dict(p) for p in profiles]
    if args.format == "json":
        run.emit_json(payload)
        return EXIT_OK
    rows = [
        [p.name, p.clock_mhz, p.flash_bytes, p.ram_bytes, "yes" if p.has_fpu else "no", p.avg_power_mw, "yes" if p.calibrated else "no"]
        for p in profiles
    ]
    run.out.write(render_table(["name", "MHz", "flash B", "RAM B", "FPU", "power mW", "calibrated"], rows))
    return EXIT_OK


def cmd_synth(args, run: Run) -> int:
    model = _model(run, args.model)
    profile = find_profile(args.profile)
    configs = [OptimizationConfig.from_label(c) for c in args.configs.split(",")]
    records = synthesize_log(
        model, profile, configs, runs=args.runs, noise=args.noise, seed=args.seed, mcu=args.mcu
    )
    text = write_log(records)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        run.out.write(text)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="costlab", description="Static cost analysis of neural networks for microcontrollers.")
    parser.add_argument("--version", action="version", version=f"costlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    def fmt(p):
        p.add_argument("--format", choices=("table", "json"), default="table")

    p = sub.add_parser("analyze", help="per-layer parameters, MACCs and FLOPs")
    p.add_argument("models", nargs="+", help="model files (or bundled fixture names)")
    p.add_argument("--jobs", type=int, default=4, help="parallel workers for several models")
    fmt(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("estimate", help="latency / energy estimate on a hardware profile")
    p.add_argument("model")
    p.add_argument("--profile", required=True, help="builtin name, name in $COSTLAB_PROFILE_DIR, or JSON path")
    p.add_argument("--quantized", action="store_true", help="8-bit model")
    p.add_argument("--cmsis", action="store_true", help="optimized CMSIS-NN kernels (needs --quantized)")
    p.add_argument("--fpu", dest="fpu", action="store_true", default=None, help="FPU enabled (default: profile)")
    p.add_argument("--no-fpu", dest="fpu", action="store_false")
    fmt(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("ingest", help="empirical latency per MACC from a benchmark log")
    p.add_argument("log")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", help="directory for plot-ready CSV files")
    fmt(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pareto", help="latency / energy Pareto front")
    p.add_argument("input", help="benchmark log (.csv) or estimates (.json)")
    p.add_argument("-o", "--output", help="directory for pareto.csv")
    fmt(p)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("calibrate", help="fit a hardware profile to a benchmark log")
    p.add_argument("log")
    p.add_argument("--model", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("-o", "--output", required=True, help="calibrated profile JSON")
    fmt(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="generate a benchmark network family")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--from", type=int, required=True)
    p.add_argument("--to", type=int, required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    fmt(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("lint", help="check a model against hardware-aware design rules")
    p.add_argument("model")
    p.add_argument("--profile")
    fmt(p)
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("profiles", help="list builtin and user hardware profiles")
    p.add_argument("--show", help="only this profile")
    p.add_argument("--export", help="write profiles as JSON into this directory")
    fmt(p)
    p.set_defaults(func=cmd_profiles)

    p = sub.add_parser("synth", help="synthesize a benchmark log from the estimator")
    p.add_argument("model")
    p.add_argument("--profile", required=True)
    p.add_argument("--configs", default="U,U+FPU,Q,Q+CMSIS", help="comma-separated config labels")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0, help="relative std-dev of multiplicative noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mcu", help="MCU name written into the log (default: profile name)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth)
    return parser


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ctx = Run(args.subcommand, out, err)
    try:
        return args.func(args, ctx)
    except (UsageError, ModelFormatError, ModelValidationError, ProfileError, ValueError, OSError) as exc:
        err.write(f"costlab {args.subcommand}: error: {exc}\n")
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
