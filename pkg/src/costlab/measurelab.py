"""Benchmark-log ingestion, empirical latency per MACC, latency/energy
regression, Pareto fronts and profile calibration.

Log format (CSV, UTF-8, ``.`` decimals)::

    run_id,mcu,quantized,cmsis,fpu,layer_index,layer_class,latency_ms,energy_mj

``layer_index`` is an integer or ``total``; ``layer_class`` is one of the
hardware-model classes or ``model`` for ``total`` rows.
"""
from __future__ import annotations

import csv
import io
import math
import random
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .hwmodel import (
    ALIGNMENT_ORDER,
    AlignmentClass,
    HardwareProfile,
    LayerClass,
    OptimizationConfig,
    alignment_driver,
    classify_alignment,
    delta_eff,
    estimate,
    layer_class,
)
from .model_ir import ModelSpec
from .opcount import count_model

LOG_HEADER = ["run_id", "mcu", "quantized", "cmsis", "fpu", "layer_index", "layer_class", "latency_ms", "energy_mj"]
TOTAL = "total"
MODEL_CLASS = "model"


class LogFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DegenerateFitError(ValueError):
    pass


class CoverageError(ValueError):
    def __init__(self, cells: Sequence[str]):
        self.cells = list(cells)
        super().__init__("insufficient coverage for: " + ", ".join(self.cells))


@dataclass(frozen=True)
class MeasurementRecord:
    run_id: str
    mcu: str
    config: OptimizationConfig
    layer_index: int | str
    layer_class: LayerClass | str
    latency_ms: float
    energy_mj: float
    maccs: int | None = None

    def __post_init__(self):
        if not self.latency_ms > 0:
            raise ValueError(f"latency_ms must be > 0, got {self.latency_ms}")
        if not self.energy_mj >= 0:
            raise ValueError(f"energy_mj must be >= 0, got {self.energy_mj}")

    @property
    def is_total(self) -> bool:
        return self.layer_index == TOTAL


_BOOL = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _parse_bool(value: str, column: str, line: int) -> bool:
    try:
        return _BOOL[value.strip().lower()]
    except KeyError:
        raise LogFormatError(f"{column} must be a boolean (0/1/true/false), got {value!r}", line) from None


def parse_log(text: str) -> list[MeasurementRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise LogFormatError("empty log (missing header)", 1) from None
    if [h.strip() for h in header] != LOG_HEADER:
        raise LogFormatError(f"header must be {','.join(LOG_HEADER)}", 1)
    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(LOG_HEADER):
            raise LogFormatError(f"expected {len(LOG_HEADER)} columns, got {len(row)}", line)
        run_id, mcu, q, c, f, index, cls, latency, energy = (cell.strip() for cell in row)
        try:
            config = OptimizationConfig(
                _parse_bool(q, "quantized", line), _parse_bool(c, "cmsis", line), _parse_bool(f, "fpu", line)
            )
            if index == TOTAL:
                layer_index: int | str = TOTAL
                if cls != MODEL_CLASS:
                    raise ValueError(f"total rows must have layer_class {MODEL_CLASS!r}")
                klass: LayerClass | str = MODEL_CLASS
            else:
                layer_index = int(index)
                if layer_index < 0:
                    raise ValueError("layer_index must be >= 0")
                klass = LayerClass(cls)
            records.append(
                MeasurementRecord(run_id, mcu, config, layer_index, klass, float(latency), float(energy))
            )
        except ValueError as exc:
            raise LogFormatError(str(exc), line) from None
    return records


def load_log(path) -> list[MeasurementRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_log(fh.read())


def _fmt_bool(value: bool) -> str:
    return "1" if value else "0"


def write_log(records: Iterable[MeasurementRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for r in records:
        cls = r.layer_class.value if isinstance(r.layer_class, LayerClass) else r.layer_class
        writer.writerow(
            [
                r.run_id,
                r.mcu,
                _fmt_bool(r.config.quantized),
                _fmt_bool(r.config.cmsis_kernels),
                _fmt_bool(r.config.fpu_enabled),
                r.layer_index,
                cls,
                repr(float(r.latency_ms)),
                repr(float(r.energy_mj)),
            ]
        )
    return out.getvalue()


# --- joining records to a model ---------------------------------------------

@dataclass(frozen=True)
class LayerInfo:
    index: int
    layer_class: LayerClass
    alignment: AlignmentClass
    maccs: int


def compute_layers(model: ModelSpec) -> dict[int, LayerInfo]:
    counts = count_model(model)
    info = {}
    for i, layer in enumerate(model.layers):
        cls = layer_class(layer)
        if cls is None:
            continue
        align = classify_alignment(alignment_driver(layer, counts.shapes[i]))
        info[i] = LayerInfo(i, cls, align, counts.per_layer[i].maccs)
    return info


def join(records: Iterable[MeasurementRecord], model: ModelSpec) -> list[tuple[MeasurementRecord, LayerInfo]]:
    """Pair every layer-level record with its layer; fills in ``maccs``."""
    layers = compute_layers(model)
    joined = []
    for r in records:
        if r.is_total:
            continue
        if not 0 <= r.layer_index < len(model.layers):
            raise ValueError(f"run {r.run_id}: layer_index {r.layer_index} outside model {model.name}")
        info = layers.get(r.layer_index)
        if info is None:
            kind = model.layers[r.layer_index].type_name
            raise ValueError(f"run {r.run_id}: layer {r.layer_index} ({kind}) has zero MACCs and cannot be timed per op")
        if r.layer_class != info.layer_class:
            raise ValueError(
                f"run {r.run_id}: layer {r.layer_index} logged as {r.layer_class.value}, model says {info.layer_class.value}"
            )
        joined.append((replace(r, maccs=info.maccs), info))
    return joined


# --- empirical delta ------------------------------------------------------------

@dataclass(frozen=True)
class DeltaRow:
    run_id: str
    mcu: str
    config: str
    layer_index: int
    layer_class: LayerClass
    alignment: AlignmentClass
    maccs: int
    latency_ms: float
    delta_ns_per_op: float


@dataclass(frozen=True)
class DeltaGroup:
    mcu: str
    config: str
    layer_class: LayerClass
    alignment: AlignmentClass
    n: int
    mean_delta_ns_per_op: float
    min_delta_ns_per_op: float
    max_delta_ns_per_op: float


@dataclass(frozen=True)
class DeltaReport:
    rows: tuple[DeltaRow, ...]
    groups: tuple[DeltaGroup, ...]


def empirical_delta(records: Iterable[MeasurementRecord], model: ModelSpec) -> DeltaReport:
    """Measured latency divided by estimated MACCs, in ns per MACC."""
    rows = []
    for r, info in join(records, model):
        rows.append(
            DeltaRow(
                r.run_id,
                r.mcu,
                r.config.label,
                info.index,
                info.layer_class,
                info.alignment,
                info.maccs,
                r.latency_ms,
                r.latency_ms * 1e6 / info.maccs,
            )
        )
    buckets: dict[tuple, list[float]] = defaultdict(list)
    for row in rows:
        buckets[(row.mcu, row.config, row.layer_class, row.alignment)].append(row.delta_ns_per_op)
    class_order = list(LayerClass)
    groups = [
        DeltaGroup(mcu, config, cls, align, len(v), math.fsum(v) / len(v), min(v), max(v))
        for (mcu, config, cls, align), v in buckets.items()
    ]
    groups.sort(key=lambda g: (g.mcu, g.config, class_order.index(g.layer_class), ALIGNMENT_ORDER.index(g.alignment)))
    return DeltaReport(tuple(rows), tuple(groups))


# --- regression -----------------------------------------------------------------

@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    pearson_r: float
    n: int
    degenerate: bool = False

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def linear_fit(x: Sequence[float], y: Sequence[float]) -> RegressionFit:
    """Ordinary least squares of y on x with the product-moment correlation.

    Constant y gives slope 0, r = 0 and ``degenerate=True``; constant x has
    no defined fit and raises.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    n = len(xs)
    if n < 2 or len(ys) != n:
        raise DegenerateFitError(f"need at least 2 paired samples, got {n}")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    sxy = float(np.dot(dx, dy))
    if sxx == 0:
        raise DegenerateFitError("zero variance in latency; correlation undefined")
    slope = sxy / sxx
    intercept = float(ys.mean() - slope * xs.mean())
    if syy == 0:
        return RegressionFit(slope, intercept, 0.0, n, degenerate=True)
    r = sxy / math.sqrt(sxx * syy)
    return RegressionFit(slope, intercept, max(-1.0, min(1.0, r)), n)


def fit_latency_energy(records: Iterable[MeasurementRecord], grouping: str = "per-layer") -> RegressionFit:
    if grouping not in ("per-model", "per-layer"):
        raise ValueError("grouping must be 'per-model' or 'per-layer'")
    want_total = grouping == "per-model"
    chosen = [r for r in records if r.is_total == want_total]
    return linear_fit([r.latency_ms for r in chosen], [r.energy_mj for r in chosen])


# --- Pareto front -----------------------------------------------------------

@dataclass(frozen=True)
class ParetoPoint:
    label: str
    latency_ms: float
    energy_mj: float

    def __post_init__(self):
        if not (self.latency_ms > 0 and self.energy_mj > 0):
            raise ValueError(f"{self.label}: Pareto coordinates must be positive")


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset when minimizing latency and energy.

    Sort by latency, then sweep keeping the lowest energy seen at strictly
    smaller latency. Exact duplicates of a front point are all kept.
    """
    if not points:
        raise ValueError("pareto_front needs at least one point")
    ordered = sorted(points, key=lambda p: (p.latency_ms, p.energy_mj, p.label))
    front = []
    best = math.inf
    i = 0
    while i < len(ordered):
        latency = ordered[i].latency_ms
        j = i
        while j < len(ordered) and ordered[j].latency_ms == latency:
            j += 1
        lowest = ordered[i].energy_mj
        if lowest < best:
            front.extend(p for p in ordered[i:j] if p.energy_mj == lowest)
            best = lowest
        i = j
    return front


def points_from_records(records: Iterable[MeasurementRecord]) -> list[ParetoPoint]:
    """One point per (mcu, config): mean of ``total`` rows, or of per-run layer sums
    when a run has no ``total`` row."""
    per_run: dict[tuple, list[float]] = {}
    totals: dict[tuple, tuple[float, float]] = {}
    for r in records:
        key = (r.run_id, r.mcu, r.config.label)
        if r.is_total:
            totals[key] = (r.latency_ms, r.energy_mj)
        else:
            acc = per_run.setdefault(key, [0.0, 0.0])
            acc[0] += r.latency_ms
            acc[1] += r.energy_mj
    for key, (lat, en) in per_run.items():
        totals.setdefault(key, (lat, en))
    grouped: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for (_, mcu, label), value in totals.items():
        grouped[f"{mcu} {label}"].append(value)
    return [
        ParetoPoint(label, math.fsum(v[0] for v in values) / len(values), math.fsum(v[1] for v in values) / len(values))
        for label, values in sorted(grouped.items())
    ]


# --- synthetic logs --------------------------------------------------------------

def synthesize_log(
    model: ModelSpec,
    profile: HardwareProfile,
    configs: Sequence[OptimizationConfig],
    runs: int = 1,
    noise: float = 0.0,
    seed: int = 0,
    mcu: str | None = None,
    include_totals: bool = True,
) -> list[MeasurementRecord]:
    """Records the estimator would predict, with optional multiplicative
    Gaussian noise (relative standard deviation ``noise``) on latency and energy."""
    rng = random.Random(seed)
    mcu = mcu or profile.name
    records = []
    for config in configs:
        est = estimate(model, profile, config)
        for run in range(runs):
            run_id = f"{model.name}-{mcu}-{config.label}-{run}"
            total_lat = total_en = 0.0
            for layer in est.per_layer:
                if layer.layer_class is None:
                    continue
                lat = layer.latency_ms * (1 + rng.gauss(0, noise)) if noise else layer.latency_ms
                en = lat * profile.avg_power_mw / 1000
                en = en * (1 + rng.gauss(0, noise)) if noise else en
                total_lat += lat
                total_en += en
                records.append(MeasurementRecord(run_id, mcu, config, layer.index, layer.layer_class, lat, en))
            if include_totals:
                records.append(MeasurementRecord(run_id, mcu, config, TOTAL, MODEL_CLASS, total_lat, total_en))
    return records


# --- calibration -------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationReport:
    profile: HardwareProfile
    fitted: tuple[str, ...]
    untouched: tuple[str, ...]
    energy_fit: RegressionFit | None
    mape_percent: float | None
    n_records: int
    # layer classes whose fitted gains were pooled to keep odd <= even <= div4
    order_adjusted: tuple[str, ...] = ()


def _cell_name(cls: LayerClass, align: AlignmentClass | None = None) -> str:
    return f"delta_nc[{cls.value}]" if align is None else f"gain[{cls.value}][{align.value}]"


def all_cells() -> list[str]:
    cells = [_cell_name(c) for c in LayerClass]
    cells += [_cell_name(c, a) for c in LayerClass for a in ALIGNMENT_ORDER]
    return cells + ["float_vs_q_factor", "fpu_off_penalty", "avg_power_mw"]


def _monotone(values: list[float]) -> list[float]:
    """Pool adjacent violators so the sequence is non-decreasing."""
    blocks = [[v, 1] for v in values]
    i = 0
    while i < len(blocks) - 1:
        if blocks[i][0] > blocks[i + 1][0]:
            total = blocks[i][0] * blocks[i][1] + blocks[i + 1][0] * blocks[i + 1][1]
            size = blocks[i][1] + blocks[i + 1][1]
            blocks[i : i + 2] = [[total / size, size]]
            i = max(i - 1, 0)
        else:
            i += 1
    out = []
    for value, size in blocks:
        out += [value] * size
    return out


def _through_origin(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of y = k x."""
    return math.fsum(a * b for a, b in zip(x, y)) / math.fsum(a * a for a in x)


def prediction_mape(records: Iterable[MeasurementRecord], model: ModelSpec, profile: HardwareProfile) -> float:
    """Mean absolute percentage error of per-layer latency predictions."""
    errors = []
    for r, info in join(records, model):
        predicted = info.maccs * delta_eff(profile, info.layer_class, info.alignment, r.config) * 1e-6
        errors.append(abs(predicted - r.latency_ms) / r.latency_ms)
    if not errors:
        raise ValueError("no layer-level records to evaluate")
    return 100 * math.fsum(errors) / len(errors)


def calibrate(
    records: Sequence[MeasurementRecord], model: ModelSpec, profile: HardwareProfile
) -> CalibrationReport:
    """Re-estimate profile parameters cell by cell with least squares.

    * ``delta_nc[class]``: quantized, no-CMSIS layer rows (latency vs MACCs).
    * ``gain[class][alignment]``: quantized + CMSIS rows, relative to the
      (re-estimated or existing) ``delta_nc``.
    * ``float_vs_q_factor`` / ``fpu_off_penalty``: float rows with / without FPU.
    * ``avg_power_mw``: slope of energy on latency over all rows.

    Cells without data keep their current value and are listed as untouched.
    """
    records = [r for r in records if r.mcu.lower() == profile.name.lower()] or list(records)
    joined = join(records, model)
    if not joined:
        raise CoverageError(all_cells())

    buckets: dict[tuple, list[tuple[int, float]]] = defaultdict(list)
    for r, info in joined:
        c = r.config
        if c.quantized and not c.cmsis_kernels:
            key = ("nc", info.layer_class, None)
        elif c.quantized:
            key = ("cmsis", info.layer_class, info.alignment)
        else:
            key = ("fpu" if c.fpu_enabled else "nofpu", None, None)
        buckets[key].append((info.maccs, r.latency_ms * 1e6, info))

    fitted: list[str] = []
    delta_nc = dict(profile.delta_nc)
    for cls in LayerClass:
        rows = buckets.get(("nc", cls, None))
        if rows:
            delta_nc[cls] = _through_origin([m for m, _, _ in rows], [t for _, t, _ in rows])
            fitted.append(_cell_name(cls))

    gain = {c: dict(row) for c, row in profile.gain.items()}
    for cls in LayerClass:
        for align in ALIGNMENT_ORDER:
            rows = buckets.get(("cmsis", cls, align))
            if not rows or cls not in delta_nc:
                continue
            optimized = _through_origin([m for m, _, _ in rows], [t for _, t, _ in rows])
            gain.setdefault(cls, {a: 1.0 for a in ALIGNMENT_ORDER})[align] = delta_nc[cls] / optimized
            fitted.append(_cell_name(cls, align))

    adjusted = []
    for cls, row in gain.items():
        ordered = [row[a] for a in ALIGNMENT_ORDER]
        repaired = _monotone(ordered)
        if repaired != ordered:
            row.update(zip(ALIGNMENT_ORDER, repaired))
            adjusted.append(cls.value)

    def quantized_baseline(rows):
        return [m * delta_nc[info.layer_class] for m, _, info in rows]

    changes: dict = {}
    rows = buckets.get(("fpu", None, None))
    float_factor = profile.float_vs_q_factor
    if rows:
        float_factor = _through_origin(quantized_baseline(rows), [t for _, t, _ in rows])
        changes["float_vs_q_factor"] = float_factor
        fitted.append("float_vs_q_factor")
    rows = buckets.get(("nofpu", None, None))
    if rows:
        base = [b * float_factor for b in quantized_baseline(rows)]
        changes["fpu_off_penalty"] = _through_origin(base, [t for _, t, _ in rows])
        fitted.append("fpu_off_penalty")

    energy_fit = None
    layer_rows = [r for r, _ in joined]
    if len(layer_rows) >= 2:
        try:
            energy_fit = linear_fit([r.latency_ms for r in layer_rows], [r.energy_mj for r in layer_rows])
        except DegenerateFitError:
            energy_fit = None
        if energy_fit is not None and energy_fit.slope > 0:
            changes["avg_power_mw"] = energy_fit.slope * 1000
            fitted.append("avg_power_mw")

    updated = replace(profile, delta_nc=delta_nc, gain=gain, calibrated=True, **changes)
    untouched = tuple(c for c in all_cells() if c not in fitted)
    return CalibrationReport(
        profile=updated,
        fitted=tuple(fitted),
        untouched=untouched,
        energy_fit=energy_fit,
        mape_percent=prediction_mape(layer_rows, model, updated),
        n_records=len(layer_rows),
        order_adjusted=tuple(adjusted),
    )
