"""Network description data model, JSON format, shape inference and validation.

A model is a linear chain of layers applied to a single input tensor. Only the
architecture is described; no weights are stored.

Document layout::

    {
      "name": "lenet",
      "input": {"h": 28, "w": 28, "c": 1},
      "weight_bits": 32,
      "metadata": {"accuracy": "98.79%"},
      "layers": [
        {"type": "conv2d", "kernel": [5, 5], "stride": [1, 1], "padding": [0, 0], "filters": 6},
        {"type": "activation", "kind": "relu"},
        {"type": "pool", "kernel": [2, 2], "stride": [2, 2], "kind": "max"},
        {"type": "flatten"},
        {"type": "dense", "units": 10}
      ]
    }

Pairs are written ``[x, y]`` (width first). A bare integer is accepted for a
pair and means the same value in both dimensions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Union

SUPPORTED_WEIGHT_BITS = (8, 16, 32)
POOL_KINDS = ("max", "avg")
ACTIVATION_KINDS = ("relu", "softmax", "tanh", "sigmoid")


class ModelFormatError(ValueError):
    """The document is not well-formed (JSON syntax or structure)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class ModelValidationError(ValueError):
    """A model violates a structural rule. ``layer_index`` is None for model-level rules."""

    def __init__(self, rule: str, message: str, layer_index: int | None = None):
        self.rule = rule
        self.layer_index = layer_index
        prefix = f"layer {layer_index}: " if layer_index is not None else ""
        super().__init__(f"{prefix}{message} [{rule}]")


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ModelValidationError("dim>=1", f"{name} must be a positive integer, got {value!r}")

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels

    @property
    def is_flat(self) -> bool:
        return self.height == 1 and self.width == 1

    def __str__(self) -> str:
        return f"{self.height}x{self.width}x{self.channels}"


Pair = tuple[int, int]


@dataclass(frozen=True)
class Dense:
    units: int
    type_name = "dense"


@dataclass(frozen=True)
class Conv2D:
    kernel: Pair
    stride: Pair
    padding: Pair
    filters: int
    type_name = "conv2d"


@dataclass(frozen=True)
class DepthwiseConv2D:
    kernel: Pair
    stride: Pair
    padding: Pair
    type_name = "dw_conv2d"


@dataclass(frozen=True)
class Pool:
    kernel: Pair
    stride: Pair
    kind: str = "max"
    type_name = "pool"


@dataclass(frozen=True)
class Flatten:
    type_name = "flatten"


@dataclass(frozen=True)
class Activation:
    kind: str = "relu"
    type_name = "activation"


LayerSpec = Union[Dense, Conv2D, DepthwiseConv2D, Pool, Flatten, Activation]
COMPUTE_LAYERS = (Dense, Conv2D, DepthwiseConv2D)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input: TensorShape
    layers: tuple[LayerSpec, ...]
    weight_bits: int = 32
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.input == other.input
            and self.layers == other.layers
            and self.weight_bits == other.weight_bits
            and dict(self.metadata) == dict(other.metadata)
        )

    def __hash__(self):
        return hash((self.name, self.input, self.layers, self.weight_bits))


def output_length(size: int, kernel: int, stride: int, padding: int) -> int:
    """Number of window positions along one dimension (floor semantics)."""
    return (size - kernel + 2 * padding) // stride + 1


def _check_window(index: int, layer, shape: TensorShape, padding: Pair) -> None:
    for d, (size, k, s, p) in enumerate(
        zip((shape.width, shape.height), layer.kernel, layer.stride, padding)
    ):
        axis = "xy"[d]
        if k < 1 or s < 1 or p < 0:
            raise ModelValidationError(
                "K_d>=1, S_d>=1, P_d>=0",
                f"invalid window along {axis}: kernel={k}, stride={s}, padding={p}",
                index,
            )
        if size + 2 * p < k:
            raise ModelValidationError(
                "I_d + 2P_d >= K_d",
                f"kernel {k} exceeds padded input {size}+2*{p} along {axis}",
                index,
            )


def layer_output_shape(index: int, layer: LayerSpec, shape: TensorShape) -> TensorShape:
    """Output shape of ``layer`` applied to ``shape``; raises on rule violations."""
    if isinstance(layer, Dense):
        if not shape.is_flat:
            raise ModelValidationError(
                "dense-needs-flat",
                f"dense layer receives non-flat input {shape}; insert a flatten layer",
                index,
            )
        if layer.units < 1:
            raise ModelValidationError("units>=1", "dense units must be >= 1", index)
        return TensorShape(1, 1, layer.units)
    if isinstance(layer, (Conv2D, DepthwiseConv2D)):
        _check_window(index, layer, shape, layer.padding)
        ox = output_length(shape.width, layer.kernel[0], layer.stride[0], layer.padding[0])
        oy = output_length(shape.height, layer.kernel[1], layer.stride[1], layer.padding[1])
        if isinstance(layer, Conv2D):
            if layer.filters < 1:
                raise ModelValidationError("filters>=1", "conv filters must be >= 1", index)
            return TensorShape(oy, ox, layer.filters)
        return TensorShape(oy, ox, shape.channels)
    if isinstance(layer, Pool):
        _check_window(index, layer, shape, (0, 0))
        if layer.kind not in POOL_KINDS:
            raise ModelValidationError("pool-kind", f"unknown pool kind {layer.kind!r}", index)
        ox = output_length(shape.width, layer.kernel[0], layer.stride[0], 0)
        oy = output_length(shape.height, layer.kernel[1], layer.stride[1], 0)
        return TensorShape(oy, ox, shape.channels)
    if isinstance(layer, Flatten):
        return TensorShape(1, 1, shape.size)
    if isinstance(layer, Activation):
        if layer.kind not in ACTIVATION_KINDS:
            raise ModelValidationError("activation-kind", f"unknown activation {layer.kind!r}", index)
        return shape
    raise ModelValidationError("layer-type", f"unsupported layer {layer!r}", index)


def infer_shapes(model: ModelSpec) -> list[TensorShape]:
    """Shapes at every layer boundary: ``[input, after layer 0, ..., after last layer]``."""
    shapes = [model.input]
    for i, layer in enumerate(model.layers):
        shapes.append(layer_output_shape(i, layer, shapes[-1]))
    return shapes


def validate(model: ModelSpec) -> ModelSpec:
    if model.weight_bits not in SUPPORTED_WEIGHT_BITS:
        raise ModelValidationError(
            "weight_bits", f"weight_bits must be one of {SUPPORTED_WEIGHT_BITS}, got {model.weight_bits}"
        )
    if not model.layers:
        raise ModelValidationError("non-empty", "model has no layers")
    infer_shapes(model)
    return model


# --- JSON document format ---------------------------------------------------

_LAYER_FIELDS = {
    "dense": {"units"},
    "conv2d": {"kernel", "stride", "padding", "filters"},
    "dw_conv2d": {"kernel", "stride", "padding"},
    "pool": {"kernel", "stride", "kind"},
    "flatten": set(),
    "activation": {"kind"},
}
_OPTIONAL = {"stride", "padding", "kind"}
_TOP_FIELDS = {"name", "input", "weight_bits", "layers", "metadata"}


def _int(value, what: str, index: int | None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ModelValidationError("type", f"{what} must be an integer, got {value!r}", index)
    return value


def _pair(value, what: str, index: int) -> Pair:
    if isinstance(value, list) and len(value) == 2:
        return (_int(value[0], what, index), _int(value[1], what, index))
    if isinstance(value, int) and not isinstance(value, bool):
        return (value, value)
    raise ModelValidationError("type", f"{what} must be an integer or [x, y] pair, got {value!r}", index)


def _layer_from_dict(index: int, raw: Any) -> LayerSpec:
    if not isinstance(raw, dict):
        raise ModelValidationError("type", "layer must be an object", index)
    kind = raw.get("type")
    if kind not in _LAYER_FIELDS:
        raise ModelValidationError("layer-type", f"unknown layer type {kind!r}", index)
    allowed = _LAYER_FIELDS[kind]
    unknown = set(raw) - allowed - {"type"}
    if unknown:
        raise ModelValidationError("unknown-field", f"unknown field(s) {sorted(unknown)} for {kind}", index)
    missing = allowed - _OPTIONAL - set(raw)
    if missing:
        raise ModelValidationError("missing-field", f"missing field(s) {sorted(missing)} for {kind}", index)

    if kind == "dense":
        return Dense(_int(raw["units"], "units", index))
    if kind == "flatten":
        return Flatten()
    if kind == "activation":
        return Activation(raw.get("kind", "relu"))
    kernel = _pair(raw["kernel"], "kernel", index)
    if kind == "pool":
        stride = _pair(raw.get("stride", list(kernel)), "stride", index)
        return Pool(kernel, stride, raw.get("kind", "max"))
    stride = _pair(raw.get("stride", 1), "stride", index)
    padding = _pair(raw.get("padding", 0), "padding", index)
    if kind == "conv2d":
        return Conv2D(kernel, stride, padding, _int(raw["filters"], "filters", index))
    return DepthwiseConv2D(kernel, stride, padding)


def model_from_dict(doc: Any) -> ModelSpec:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ModelValidationError("unknown-field", f"unknown top-level field(s) {sorted(unknown)}")
    for required in ("name", "input", "layers"):
        if required not in doc:
            raise ModelValidationError("missing-field", f"missing top-level field {required!r}")
    raw_input = doc["input"]
    if not isinstance(raw_input, dict) or set(raw_input) != {"h", "w", "c"}:
        raise ModelValidationError("input", "input must be an object with exactly h, w, c")
    shape = TensorShape(
        _int(raw_input["h"], "input.h", None),
        _int(raw_input["w"], "input.w", None),
        _int(raw_input["c"], "input.c", None),
    )
    if not isinstance(doc["layers"], list):
        raise ModelValidationError("type", "layers must be a list")
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ModelValidationError("type", "metadata must be an object")
    name = doc["name"]
    if not isinstance(name, str):
        raise ModelValidationError("type", "name must be a string")
    model = ModelSpec(
        name=name,
        input=shape,
        layers=tuple(_layer_from_dict(i, raw) for i, raw in enumerate(doc["layers"])),
        weight_bits=_int(doc.get("weight_bits", 32), "weight_bits", None),
        metadata=metadata,
    )
    return validate(model)


def parse_model(text: str) -> ModelSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return model_from_dict(doc)


def load_model(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def layer_to_dict(layer: LayerSpec) -> dict:
    out: dict[str, Any] = {"type": layer.type_name}
    if isinstance(layer, Dense):
        out["units"] = layer.units
    elif isinstance(layer, (Conv2D, DepthwiseConv2D)):
        out["kernel"] = list(layer.kernel)
        out["stride"] = list(layer.stride)
        out["padding"] = list(layer.padding)
        if isinstance(layer, Conv2D):
            out["filters"] = layer.filters
    elif isinstance(layer, Pool):
        out.update(kernel=list(layer.kernel), stride=list(layer.stride), kind=layer.kind)
    elif isinstance(layer, Activation):
        out["kind"] = layer.kind
    return out


def model_to_dict(model: ModelSpec) -> dict:
    return {
        "name": model.name,
        "input": {"h": model.input.height, "w": model.input.width, "c": model.input.channels},
        "weight_bits": model.weight_bits,
        "metadata": dict(model.metadata),
        "layers": [layer_to_dict(layer) for layer in model.layers],
    }


def serialize_model(model: ModelSpec) -> str:
    validate(model)
    return json.dumps(model_to_dict(model), indent=2, ensure_ascii=False) + "\n"
