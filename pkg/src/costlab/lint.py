"""Hardware-aware design checks.

Rules
-----
R1  conv / 1x1 conv / depthwise layer whose input channel count is not a
    multiple of 4 (warn; gain = G[div4] / G[current alignment]).
R2  dense layer with an odd input length (warn; gain = G[div4] / G[odd]).
R3  depthwise convolution present (info; highest latency per MACC).
R4  float32 weights on a profile without an FPU (warn; gain = estimated
    float-no-FPU over quantized+CMSIS speedup).
R5  model does not fit the profile's flash or RAM (warn).

Model-level findings (R4, R5) use ``layer_index = -1``. Gains are only
computed when a profile is supplied. Findings are sorted by layer index,
then rule id.
"""
from __future__ import annotations

from dataclasses import dataclass

from .hwmodel import (
    CANONICAL_CONFIGS,
    L4_DELTA_NC,
    AlignmentClass,
    HardwareProfile,
    LayerClass,
    OptimizationConfig,
    alignment_driver,
    classify_alignment,
    fit_check,
    layer_class,
    speedup,
)
from .model_ir import ModelSpec, infer_shapes

INFO = "info"
WARN = "warn"


@dataclass(frozen=True)
class Finding:
    rule_id: str
    layer_index: int
    severity: str
    message: str
    estimated_gain: float | None = None
    suggestion: int | None = None


def next_multiple_of_4(n: int) -> int:
    return -(-n // 4) * 4


def _alignment_gain(profile: HardwareProfile | None, cls: LayerClass, align: AlignmentClass) -> float | None:
    if profile is None or cls not in profile.gain:
        return None
    row = profile.gain[cls]
    return row[AlignmentClass.DIV4] / row[align]


def model_config(model: ModelSpec, profile: HardwareProfile | None) -> OptimizationConfig:
    """The deployment a model's bit-width implies: int8 uses CMSIS kernels."""
    if model.weight_bits == 8:
        return CANONICAL_CONFIGS["Q+CMSIS"]
    has_fpu = profile.has_fpu if profile is not None else True
    return OptimizationConfig(quantized=False, cmsis_kernels=False, fpu_enabled=has_fpu)


def lint_model(model: ModelSpec, profile: HardwareProfile | None = None) -> list[Finding]:
    shapes = infer_shapes(model)
    findings: list[Finding] = []

    for i, layer in enumerate(model.layers):
        cls = layer_class(layer)
        if cls is None:
            continue
        n = alignment_driver(layer, shapes[i])
        align = classify_alignment(n)
        if cls is LayerClass.DENSE:
            if align is AlignmentClass.ODD:
                target = next_multiple_of_4(n)
                findings.append(
                    Finding(
                        "R2",
                        i,
                        WARN,
                        f"dense input length {n} is odd; {target} inputs allow aligned SIMD access",
                        _alignment_gain(profile, cls, align),
                        target,
                    )
                )
            continue
        if align is not AlignmentClass.DIV4:
            target = next_multiple_of_4(n)
            source = "pad the model input" if i == 0 else "raise the preceding layer's output"
            findings.append(
                Finding(
                    "R1",
                    i,
                    WARN,
                    f"{cls.value} has {n} input channels ({align.value}); {source} to {target} channels",
                    _alignment_gain(profile, cls, align),
                    target,
                )
            )
        if cls is LayerClass.DW_CONV2D:
            table = profile.delta_nc if profile is not None else L4_DELTA_NC
            dw = table.get(LayerClass.DW_CONV2D)
            conv = table.get(LayerClass.CONV2D)
            detail = f" ({dw:.1f} ns/MACC vs {conv:.1f} for conv2d)" if dw and conv else ""
            findings.append(
                Finding(
                    "R3",
                    i,
                    INFO,
                    "depthwise convolution has the highest latency per MACC and gains least from optimized kernels"
                    + detail,
                )
            )

    if profile is not None:
        if model.weight_bits == 32 and not profile.has_fpu:
            gain = speedup(model, profile, CANONICAL_CONFIGS["U"], CANONICAL_CONFIGS["Q+CMSIS"])
            findings.append(
                Finding(
                    "R4",
                    -1,
                    WARN,
                    f"float32 weights on {profile.name}, which has no FPU; quantize to 8 bit",
                    gain if gain >= 1 else None,
                )
            )
        fit = fit_check(model, profile, model_config(model, profile))
        if not fit.fits:
            parts = []
            if fit.flash_excess > 0:
                parts.append(f"flash {fit.flash_needed} B needed, {fit.flash_available} B available (+{fit.flash_excess} B)")
            if fit.ram_excess > 0:
                parts.append(f"RAM {fit.ram_needed} B needed, {fit.ram_available} B available (+{fit.ram_excess} B)")
            findings.append(Finding("R5", -1, WARN, f"oversized for {profile.name}: " + "; ".join(parts)))

    findings.sort(key=lambda f: (f.layer_index, f.rule_id))
    return findings


def has_warnings(findings) -> bool:
    return any(f.severity == WARN for f in findings)
