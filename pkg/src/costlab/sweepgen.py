"""Benchmark network families and the bundled LeNet / ResNet-20 fixtures.

A sweep instantiates a template model once per value ``y`` of a single
hyper-parameter (the *slot*). The layer right after the slot is the
benchmarked layer; its input length (dense) or input channel count (conv,
depthwise) equals ``y``.

Family topologies (fixed small input -> layer carrying ``y`` -> benchmarked
layer -> flatten -> dense(10) head):

* ``dense``: 8x8x1 -> flatten -> dense(y) -> dense(32) -> dense(10)
* ``conv_filters``: 16x16x3 -> conv3x3(y) -> conv3x3(16) -> flatten -> dense(10)
* ``dwconv_channels``: 16x16x3 -> conv3x3(y) -> dwconv3x3 -> flatten -> dense(10)

Fixture dimensioning
--------------------
LeNet keeps the classic conv(6)-pool-conv(16)-pool body on a 28x28x1 input
with valid padding; the first hidden dense layer is sized to 230 units so
the float32 footprint lands on ~320 KiB. ResNet-20 is the CIFAR topology
(3 stages x 3 blocks x 2 conv3x3 at 16/32/64 filters, stride-2 stage
transitions, global average pool) laid out as a plain chain: identity
shortcuts and batch norm carry no MACCs or parameters under the counting
rules and are omitted. Resulting ratios: params 3.28x, MACCs 137x.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .hwmodel import classify_alignment
from .model_ir import (
    Activation,
    Conv2D,
    Dense,
    DepthwiseConv2D,
    Flatten,
    ModelSpec,
    ModelValidationError,
    Pool,
    TensorShape,
    serialize_model,
    validate,
)
from .opcount import count_model

FAMILIES = ("dense", "conv_filters", "dwconv_channels")


class SweepError(ValueError):
    def __init__(self, y: int, cause: Exception):
        self.y = y
        super().__init__(f"instantiation for y={y} is invalid: {cause}")


@dataclass(frozen=True)
class SweepSpec:
    family: str
    start: int
    stop: int
    step: int = 1
    base: ModelSpec | None = None
    # (layer index, field name); None means the family default
    slot: tuple[int, str] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.start < 1 or self.stop < self.start:
            raise ValueError(f"empty or non-positive range {self.start}..{self.stop}")
        if (self.base is None) != (self.slot is None):
            raise ValueError("base and slot must be given together")
        if self.slot is not None:
            index, name = self.slot
            layer = self.base.layers[index]
            if not hasattr(layer, name) or name not in ("units", "filters"):
                raise ValueError(f"slot {self.slot} does not name a units/filters field")

    @property
    def values(self) -> range:
        return range(self.start, self.stop + 1, self.step)


def family_template(family: str) -> tuple[ModelSpec, tuple[int, str]]:
    if family == "dense":
        model = ModelSpec(
            "sweep_dense",
            TensorShape(8, 8, 1),
            (Flatten(), Dense(16), Dense(32), Dense(10)),
            weight_bits=8,
        )
        return model, (1, "units")
    conv = Conv2D((3, 3), (1, 1), (1, 1), 4)
    if family == "conv_filters":
        bench = Conv2D((3, 3), (1, 1), (1, 1), 16)
    else:
        bench = DepthwiseConv2D((3, 3), (1, 1), (1, 1))
    model = ModelSpec(
        f"sweep_{family}",
        TensorShape(16, 16, 3),
        (conv, bench, Flatten(), Dense(10)),
        weight_bits=8,
    )
    return model, (0, "filters")


@dataclass
class SweepResult:
    family: str
    benchmark_index: int
    models: list[tuple[int, ModelSpec]] = field(default_factory=list)
    manifest: list[dict] = field(default_factory=list)


def _with_slot(base: ModelSpec, slot: tuple[int, str], y: int) -> ModelSpec:
    index, name = slot
    layers = list(base.layers)
    layers[index] = replace(layers[index], **{name: y})
    return replace(base, name=f"{base.name}_y{y}", layers=tuple(layers))


def generate(spec: SweepSpec) -> SweepResult:
    if spec.base is None:
        base, slot = family_template(spec.family)
    else:
        base, slot = spec.base, spec.slot
    bench = slot[0] + 1
    result = SweepResult(spec.family, bench)
    for y in spec.values:
        model = _with_slot(base, slot, y)
        try:
            validate(model)
        except ModelValidationError as exc:
            raise SweepError(y, exc) from exc
        counts = count_model(model)
        result.models.append((y, model))
        result.manifest.append(
            {
                "y": y,
                "maccs": counts.per_layer[bench].maccs,
                "alignment": classify_alignment(y).value,
            }
        )
    return result


def write_sweep(result: SweepResult, out_dir) -> Path:
    """One model file per y plus ``manifest.csv`` (``y,maccs,alignment,file``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["y", "maccs", "alignment", "file"])
        for (y, model), row in zip(result.models, result.manifest):
            fname = f"{result.family}_y{y}.json"
            (out / fname).write_text(serialize_model(model), encoding="utf-8")
            writer.writerow([row["y"], row["maccs"], row["alignment"], fname])
    return manifest_path


# --- fixtures ---------------------------------------------------------------

def lenet() -> ModelSpec:
    relu = Activation("relu")
    return ModelSpec(
        "lenet",
        TensorShape(28, 28, 1),
        (
            Conv2D((5, 5), (1, 1), (0, 0), 6),
            relu,
            Pool((2, 2), (2, 2), "max"),
            Conv2D((5, 5), (1, 1), (0, 0), 16),
            relu,
            Pool((2, 2), (2, 2), "max"),
            Flatten(),
            Dense(230),
            relu,
            Dense(84),
            relu,
            Dense(10),
            Activation("softmax"),
        ),
        weight_bits=32,
        metadata={"dataset": "mnist", "reported_accuracy_float": "98.79%"},
    )


def resnet20() -> ModelSpec:
    relu = Activation("relu")
    layers: list = [Conv2D((3, 3), (1, 1), (1, 1), 16), relu]
    for stage, filters in enumerate((16, 32, 64)):
        for conv_index in range(6):
            stride = 2 if stage > 0 and conv_index == 0 else 1
            layers += [Conv2D((3, 3), (stride, stride), (1, 1), filters), relu]
    layers += [Pool((8, 8), (8, 8), "avg"), Flatten(), Dense(10), Activation("softmax")]
    return ModelSpec(
        "resnet20",
        TensorShape(32, 32, 3),
        tuple(layers),
        weight_bits=32,
        metadata={"dataset": "cifar10", "note": "residual additions and batch norm omitted (zero cost)"},
    )


def calibration_probe() -> ModelSpec:
    """Chain that puts every (layer class, alignment class) cell in one model."""
    same3 = dict(kernel=(3, 3), stride=(1, 1), padding=(1, 1))
    one = dict(kernel=(1, 1), stride=(1, 1), padding=(0, 0))
    return ModelSpec(
        "calibration_probe",
        TensorShape(12, 12, 3),
        (
            Conv2D(filters=6, **same3),   # C_in 3 odd
            Conv2D(filters=8, **same3),   # C_in 6 even
            Conv2D(filters=5, **same3),   # C_in 8 div4
            Conv2D(filters=6, **one),     # 1x1, C_in 5 odd
            Conv2D(filters=4, **one),     # 1x1, C_in 6 even
            Conv2D(filters=7, **one),     # 1x1, C_in 4 div4
            DepthwiseConv2D(**same3),     # C_in 7 odd
            Conv2D(filters=6, **one),
            DepthwiseConv2D(**same3),     # C_in 6 even
            Conv2D(filters=8, **one),
            DepthwiseConv2D(**same3),     # C_in 8 div4
            Pool((2, 2), (2, 2), "max"),
            Flatten(),                    # 6*6*8 = 288
            Dense(15),                    # N_in 288 div4
            Dense(10),                    # N_in 15 odd
            Dense(3),                     # N_in 10 even
        ),
        weight_bits=8,
    )


def fixtures() -> dict[str, ModelSpec]:
    return {"lenet": lenet(), "resnet20": resnet20()}


DATA_DIR = Path(os.path.dirname(__file__)) / "data"
