"""Hardware profiles and the alignment-aware latency / energy estimator.

The estimator is built on the latency per MACC, ``delta = t_measured / maccs``,
used as a predictor. For each compute layer::

    latency_ms = maccs * delta_eff * 1e-6
    energy_mj  = latency_ms * avg_power_mw / 1000

where ``delta_eff`` depends on the optimization config:

=========================  ===============================================
quantized, no CMSIS        ``delta_nc[class]``
quantized + CMSIS          ``delta_nc[class] / gain[class][alignment]``
float, FPU enabled         ``delta_nc[class] * float_vs_q_factor``
float, FPU disabled        ``delta_nc[class] * float_vs_q_factor * fpu_off_penalty``
=========================  ===============================================

Alignment is the parity / divisibility by 4 of the flattened input length
(dense) or the input channel count (convolutions).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .model_ir import Conv2D, Dense, DepthwiseConv2D, ModelSpec, TensorShape, infer_shapes
from .opcount import count_model, footprint


class AlignmentClass(str, Enum):
    ODD = "odd"
    EVEN = "even"
    DIV4 = "div4"


class LayerClass(str, Enum):
    DENSE = "dense"
    CONV2D = "conv2d"
    CONV2D_1X1 = "conv2d_1x1"
    DW_CONV2D = "dw_conv2d"


ALIGNMENT_ORDER = (AlignmentClass.ODD, AlignmentClass.EVEN, AlignmentClass.DIV4)


def classify_alignment(n: int) -> AlignmentClass:
    if n < 1:
        raise ValueError(f"alignment driver must be positive, got {n}")
    if n % 4 == 0:
        return AlignmentClass.DIV4
    if n % 2 == 0:
        return AlignmentClass.EVEN
    return AlignmentClass.ODD


def layer_class(layer) -> LayerClass | None:
    """Cost class of a layer, or None for layers that do no arithmetic."""
    if isinstance(layer, Dense):
        return LayerClass.DENSE
    if isinstance(layer, Conv2D):
        return LayerClass.CONV2D_1X1 if layer.kernel == (1, 1) else LayerClass.CONV2D
    if isinstance(layer, DepthwiseConv2D):
        return LayerClass.DW_CONV2D
    return None


def alignment_driver(layer, input_shape: TensorShape) -> int:
    if isinstance(layer, Dense):
        return input_shape.size
    if isinstance(layer, (Conv2D, DepthwiseConv2D)):
        return input_shape.channels
    raise ValueError(f"{type(layer).__name__} is not a compute layer")


@dataclass(frozen=True)
class OptimizationConfig:
    quantized: bool = False
    cmsis_kernels: bool = False
    fpu_enabled: bool = True

    def __post_init__(self):
        if self.cmsis_kernels and not self.quantized:
            raise ValueError("CMSIS kernels require a quantized model")

    @property
    def label(self) -> str:
        if self.quantized:
            return "Q+CMSIS" if self.cmsis_kernels else "Q"
        return "U+FPU" if self.fpu_enabled else "U"

    @classmethod
    def from_label(cls, label: str) -> "OptimizationConfig":
        try:
            return CANONICAL_CONFIGS[label.upper()]
        except KeyError:
            raise ValueError(f"unknown config label {label!r}; expected one of {list(CANONICAL_CONFIGS)}") from None


CANONICAL_CONFIGS = {
    "U": OptimizationConfig(False, False, False),
    "U+FPU": OptimizationConfig(False, False, True),
    "Q": OptimizationConfig(True, False, True),
    "Q+CMSIS": OptimizationConfig(True, True, True),
}


class ProfileError(ValueError):
    pass


def _freeze_gain(gain) -> Mapping:
    return MappingProxyType(
        {LayerClass(c): MappingProxyType({AlignmentClass(a): float(g) for a, g in row.items()}) for c, row in gain.items()}
    )


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    clock_mhz: float
    flash_bytes: int
    ram_bytes: int
    has_fpu: bool
    delta_nc: Mapping[LayerClass, float]
    gain: Mapping[LayerClass, Mapping[AlignmentClass, float]]
    avg_power_mw: float
    fpu_off_penalty: float = 4.0
    float_vs_q_factor: float = 1.0
    code_size_bytes: int = 370 * 1024
    # False for placeholder power / scaled delta values that no log has confirmed
    calibrated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "delta_nc", MappingProxyType({LayerClass(c): float(v) for c, v in self.delta_nc.items()}))
        object.__setattr__(self, "gain", _freeze_gain(self.gain))
        for cls, value in self.delta_nc.items():
            if not value > 0:
                raise ProfileError(f"{self.name}: delta_nc[{cls.value}] must be > 0")
        for cls, row in self.gain.items():
            missing = set(ALIGNMENT_ORDER) - set(row)
            if missing:
                raise ProfileError(f"{self.name}: gain[{cls.value}] lacks {sorted(a.value for a in missing)}")
            odd, even, div4 = (row[a] for a in ALIGNMENT_ORDER)
            if min(odd, even, div4) < 1:
                raise ProfileError(f"{self.name}: gains for {cls.value} must be >= 1")
            if not odd <= even <= div4:
                raise ProfileError(f"{self.name}: gains for {cls.value} must satisfy odd <= even <= div4")
        if self.fpu_off_penalty < 1:
            raise ProfileError(f"{self.name}: fpu_off_penalty must be >= 1")
        if not self.float_vs_q_factor > 0:
            raise ProfileError(f"{self.name}: float_vs_q_factor must be > 0")
        if not self.avg_power_mw > 0 or not self.clock_mhz > 0:
            raise ProfileError(f"{self.name}: avg_power_mw and clock_mhz must be > 0")

    def __eq__(self, other):
        if not isinstance(other, HardwareProfile):
            return NotImplemented
        return profile_to_dict(self) == profile_to_dict(other)

    def __hash__(self):
        return hash(self.name)


def profile_to_dict(profile: HardwareProfile) -> dict:
    return {
        "name": profile.name,
        "clock_mhz": profile.clock_mhz,
        "flash_bytes": profile.flash_bytes,
        "ram_bytes": profile.ram_bytes,
        "has_fpu": profile.has_fpu,
        "delta_nc": {c.value: v for c, v in profile.delta_nc.items()},
        "gain": {c.value: {a.value: g for a, g in row.items()} for c, row in profile.gain.items()},
        "avg_power_mw": profile.avg_power_mw,
        "fpu_off_penalty": profile.fpu_off_penalty,
        "float_vs_q_factor": profile.float_vs_q_factor,
        "code_size_bytes": profile.code_size_bytes,
        "calibrated": profile.calibrated,
    }


_REQUIRED = ("name", "clock_mhz", "flash_bytes", "ram_bytes", "has_fpu", "delta_nc", "gain", "avg_power_mw")
_OPTIONAL = ("fpu_off_penalty", "float_vs_q_factor", "code_size_bytes", "calibrated")


def profile_from_dict(doc: dict) -> HardwareProfile:
    if not isinstance(doc, dict):
        raise ProfileError("profile document must be a JSON object")
    unknown = set(doc) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise ProfileError(f"unknown profile field(s) {sorted(unknown)}")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise ProfileError(f"missing profile field(s) {missing}")
    try:
        return HardwareProfile(**doc)
    except (TypeError, ValueError) as exc:
        raise ProfileError(str(exc)) from None


def load_profile(path) -> HardwareProfile:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProfileError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return profile_from_dict(doc)


def save_profile(profile: HardwareProfile, path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# Latency per MACC on the L4 for the hardware-agnostic kernels [ns/Op], and the
# CMSIS-NN gains per input alignment.
L4_DELTA_NC = {
    LayerClass.DENSE: 145.2,
    LayerClass.CONV2D: 250.6,
    LayerClass.CONV2D_1X1: 148.5,
    LayerClass.DW_CONV2D: 925.1,
}
L4_GAIN = {
    LayerClass.DENSE: {AlignmentClass.ODD: 2.89, AlignmentClass.EVEN: 3.13, AlignmentClass.DIV4: 3.24},
    LayerClass.CONV2D: {AlignmentClass.ODD: 6.42, AlignmentClass.EVEN: 6.96, AlignmentClass.DIV4: 7.03},
    LayerClass.CONV2D_1X1: {AlignmentClass.ODD: 5.72, AlignmentClass.EVEN: 6.33, AlignmentClass.DIV4: 6.60},
    LayerClass.DW_CONV2D: {AlignmentClass.ODD: 2.17, AlignmentClass.EVEN: 2.29, AlignmentClass.DIV4: 2.32},
}
# Optimized LeNet latency [ms] per board, used to scale the L4 delta table.
LENET_OPTIMIZED_MS = {"L4": 36.4, "F4": 16.1, "F7": 8.1}

KIB = 1024
MIB = 1024 * KIB


def builtin_profiles() -> list[HardwareProfile]:
    """L4 with the measured table; F4 and F7 scaled from it by optimized LeNet latency.

    Average power values are placeholders (``calibrated=False``) chosen so
    that L4 is the low-energy and F7 the low-latency option.
    """
    boards = [
        ("L4", 80.0, 1 * MIB, 320 * KIB, 30.0),
        ("F4", 180.0, 2 * MIB, 384 * KIB, 300.0),
        ("F7", 216.0, 2 * MIB, 512 * KIB, 400.0),
    ]
    profiles = []
    for name, clock, flash, ram, power in boards:
        scale = LENET_OPTIMIZED_MS[name] / LENET_OPTIMIZED_MS["L4"]
        profiles.append(
            HardwareProfile(
                name=name,
                clock_mhz=clock,
                flash_bytes=flash,
                ram_bytes=ram,
                has_fpu=True,
                delta_nc={c: v * scale for c, v in L4_DELTA_NC.items()},
                gain=L4_GAIN,
                avg_power_mw=power,
            )
        )
    return profiles


PROFILE_DIR_ENV = "COSTLAB_PROFILE_DIR"


def find_profile(name_or_path: str) -> HardwareProfile:
    """Resolve a builtin name (case-insensitive), a ``<name>.json`` in
    ``$COSTLAB_PROFILE_DIR`` (os.pathsep-separated), or a file path."""
    if os.path.isfile(name_or_path):
        return load_profile(name_or_path)
    for extra in filter(None, os.environ.get(PROFILE_DIR_ENV, "").split(os.pathsep)):
        candidate = Path(extra) / f"{name_or_path}.json"
        if candidate.is_file():
            return load_profile(candidate)
    for profile in builtin_profiles():
        if profile.name.lower() == name_or_path.lower():
            return profile
    raise ProfileError(f"no profile named {name_or_path!r}")


def list_profiles() -> list[HardwareProfile]:
    found = {p.name: p for p in builtin_profiles()}
    for extra in filter(None, os.environ.get(PROFILE_DIR_ENV, "").split(os.pathsep)):
        for path in sorted(Path(extra).glob("*.json")):
            profile = load_profile(path)
            found[profile.name] = profile
    return [found[k] for k in sorted(found)]


# --- estimator ----------------------------------------------------------------

def delta_eff(profile: HardwareProfile, cls: LayerClass, align: AlignmentClass, config: OptimizationConfig) -> float:
    if cls not in profile.delta_nc:
        raise ProfileError(f"profile {profile.name} has no delta for layer class {cls.value}")
    base = profile.delta_nc[cls]
    if config.quantized:
        if not config.cmsis_kernels:
            return base
        if cls not in profile.gain:
            raise ProfileError(f"profile {profile.name} has no gains for layer class {cls.value}")
        return base / profile.gain[cls][align]
    base *= profile.float_vs_q_factor
    return base if config.fpu_enabled else base * profile.fpu_off_penalty


@dataclass(frozen=True)
class LayerEstimate:
    index: int
    layer_class: LayerClass | None
    alignment_class: AlignmentClass | None
    maccs: int
    delta_used_ns_per_op: float
    latency_ms: float
    energy_mj: float


@dataclass(frozen=True)
class Estimate:
    profile: str
    config: OptimizationConfig
    per_layer: tuple[LayerEstimate, ...]

    @property
    def total_latency_ms(self) -> float:
        return sum(layer.latency_ms for layer in self.per_layer)

    @property
    def total_energy_mj(self) -> float:
        return sum(layer.energy_mj for layer in self.per_layer)


def estimate(model: ModelSpec, profile: HardwareProfile, config: OptimizationConfig) -> Estimate:
    counts = count_model(model)
    per_layer = []
    for i, layer in enumerate(model.layers):
        cls = layer_class(layer)
        if cls is None:
            per_layer.append(LayerEstimate(i, None, None, 0, 0.0, 0.0, 0.0))
            continue
        align = classify_alignment(alignment_driver(layer, counts.shapes[i]))
        delta = delta_eff(profile, cls, align, config)
        maccs = counts.per_layer[i].maccs
        latency = maccs * delta * 1e-6
        per_layer.append(
            LayerEstimate(i, cls, align, maccs, delta, latency, latency * profile.avg_power_mw / 1000)
        )
    return Estimate(profile.name, config, tuple(per_layer))


def speedup(model: ModelSpec, profile: HardwareProfile, config_a: OptimizationConfig, config_b: OptimizationConfig) -> float:
    """``latency(config_a) / latency(config_b)``: how much faster b is than a."""
    denominator = estimate(model, profile, config_b).total_latency_ms
    if denominator == 0:
        raise ZeroDivisionError("estimated latency of the second config is zero")
    return estimate(model, profile, config_a).total_latency_ms / denominator


@dataclass(frozen=True)
class FitResult:
    fits: bool
    flash_needed: int
    ram_needed: int
    flash_available: int
    ram_available: int
    reason: str | None

    @property
    def flash_excess(self) -> int:
        return self.flash_needed - self.flash_available

    @property
    def ram_excess(self) -> int:
        return self.ram_needed - self.ram_available


def fit_check(model: ModelSpec, profile: HardwareProfile, config: OptimizationConfig) -> FitResult:
    """Flash = parameter footprint + firmware; RAM = largest input+output activation pair."""
    bits = 8 if config.quantized else 32
    flash = footprint(model, bits).total_bytes + profile.code_size_bytes
    shapes = infer_shapes(model)
    ram = max(shapes[i].size + shapes[i + 1].size for i in range(len(model.layers))) * bits // 8
    problems = []
    if flash > profile.flash_bytes:
        problems.append("flash")
    if ram > profile.ram_bytes:
        problems.append("ram")
    return FitResult(
        fits=not problems,
        flash_needed=flash,
        ram_needed=ram,
        flash_available=profile.flash_bytes,
        ram_available=profile.ram_bytes,
        reason="+".join(problems) or None,
    )


def scale_profile(profile: HardwareProfile, name: str, factor: float, **changes) -> HardwareProfile:
    return replace(profile, name=name, delta_nc={c: v * factor for c, v in profile.delta_nc.items()}, **changes)
