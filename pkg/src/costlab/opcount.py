"""Closed-form FLOP / MACC / parameter counts and memory footprint.

Conventions follow the sliding-window formulas for dense, convolutional and
depthwise layers: every output element of a convolution costs
``C_in * (K_x*K_y + 1)`` MACCs per filter, i.e. the bias term is counted once
per input channel. Pool, flatten and activation layers are free.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model_ir import (
    Conv2D,
    Dense,
    DepthwiseConv2D,
    ModelSpec,
    SUPPORTED_WEIGHT_BITS,
    TensorShape,
    infer_shapes,
    output_length,
)

UINT64_MAX = 2**64 - 1
DEFAULT_TENSOR_OVERHEAD_BYTES = 64
BIAS_BYTES = 4


class CountOverflowError(OverflowError):
    pass


def _checked(value: int, what: str) -> int:
    if value > UINT64_MAX:
        raise CountOverflowError(f"{what} count {value} exceeds the 64-bit unsigned range")
    return value


@dataclass(frozen=True)
class OpCount:
    flops: int = 0
    maccs: int = 0
    params: int = 0
    # bias entries among params; needed to split weights from biases for footprints
    biases: int = 0

    def __add__(self, other: "OpCount") -> "OpCount":
        return OpCount(
            _checked(self.flops + other.flops, "FLOP"),
            _checked(self.maccs + other.maccs, "MACC"),
            _checked(self.params + other.params, "parameter"),
            self.biases + other.biases,
        )

    @property
    def weights(self) -> int:
        return self.params - self.biases

    def _check(self) -> "OpCount":
        _checked(self.flops, "FLOP")
        _checked(self.maccs, "MACC")
        _checked(self.params, "parameter")
        return self


ZERO = OpCount()


def count_dense(n_in: int, n_out: int) -> OpCount:
    if n_in < 1 or n_out < 1:
        raise ValueError("dense layer needs n_in >= 1 and n_out >= 1")
    return OpCount(
        flops=2 * n_out * n_in,
        maccs=n_out * (n_in + 1),
        params=n_out * (n_in + 1),
        biases=n_out,
    )._check()


def _window_positions(shape: TensorShape, kernel, stride, padding) -> int:
    ox = output_length(shape.width, kernel[0], stride[0], padding[0])
    oy = output_length(shape.height, kernel[1], stride[1], padding[1])
    if ox < 1 or oy < 1:
        raise ValueError(f"kernel {kernel} does not fit padded input {shape}")
    return ox * oy


def count_conv2d(input: TensorShape, kernel, stride, padding, filters: int) -> OpCount:
    positions = _window_positions(input, kernel, stride, padding)
    k = kernel[0] * kernel[1]
    c_in = input.channels
    return OpCount(
        flops=positions * c_in * (2 * k + 1) * filters,
        maccs=positions * c_in * (k + 1) * filters,
        params=(k * c_in + 1) * filters,
        biases=filters,
    )._check()


def count_dw_conv2d(input: TensorShape, kernel, stride, padding) -> OpCount:
    positions = _window_positions(input, kernel, stride, padding)
    k = kernel[0] * kernel[1]
    c_in = input.channels
    return OpCount(
        flops=positions * c_in * (2 * k + 1),
        maccs=positions * c_in * (k + 1),
        params=(k + 1) * c_in,
        biases=c_in,
    )._check()


def count_conv2d_simplified(input: TensorShape, kernel, filters: int) -> int:
    """MACCs for stride 1 and no padding: ``(I_x-K_x+1)(I_y-K_y+1) C_in (K_x K_y+1) C_out``."""
    return (
        (input.width - kernel[0] + 1)
        * (input.height - kernel[1] + 1)
        * input.channels
        * (kernel[0] * kernel[1] + 1)
        * filters
    )


def count_dw_conv2d_simplified(input: TensorShape, kernel) -> int:
    return (
        (input.width - kernel[0] + 1)
        * (input.height - kernel[1] + 1)
        * input.channels
        * (kernel[0] * kernel[1] + 1)
    )


def count_layer(layer, input_shape: TensorShape) -> OpCount:
    if isinstance(layer, Dense):
        return count_dense(input_shape.channels, layer.units)
    if isinstance(layer, Conv2D):
        return count_conv2d(input_shape, layer.kernel, layer.stride, layer.padding, layer.filters)
    if isinstance(layer, DepthwiseConv2D):
        return count_dw_conv2d(input_shape, layer.kernel, layer.stride, layer.padding)
    return ZERO


@dataclass(frozen=True)
class ModelCount:
    per_layer: tuple[OpCount, ...]
    total: OpCount
    shapes: tuple[TensorShape, ...]


def count_model(model: ModelSpec) -> ModelCount:
    shapes = infer_shapes(model)
    per_layer = tuple(count_layer(layer, shapes[i]) for i, layer in enumerate(model.layers))
    total = ZERO
    for c in per_layer:
        total = total + c
    return ModelCount(per_layer, total, tuple(shapes))


@dataclass(frozen=True)
class FootprintReport:
    weight_bytes: int
    bias_bytes: int
    overhead_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.weight_bytes + self.bias_bytes + self.overhead_bytes

    @property
    def total_kib(self) -> float:
        return self.total_bytes / 1024


def footprint(
    model: ModelSpec,
    weight_bits: int | None = None,
    per_tensor_overhead_bytes: int = DEFAULT_TENSOR_OVERHEAD_BYTES,
) -> FootprintReport:
    """Parameter storage. Biases stay 32-bit at every weight width; each weight
    and bias tensor pays ``per_tensor_overhead_bytes`` (scale/zero-point, headers)."""
    bits = model.weight_bits if weight_bits is None else weight_bits
    if bits not in SUPPORTED_WEIGHT_BITS:
        raise ValueError(f"unsupported bit-width {bits}; expected one of {SUPPORTED_WEIGHT_BITS}")
    counts = count_model(model)
    weights = sum(c.weights for c in counts.per_layer)
    biases = sum(c.biases for c in counts.per_layer)
    tensors = 2 * sum(1 for c in counts.per_layer if c.params)
    return FootprintReport(
        weight_bytes=weights * bits // 8,
        bias_bytes=biases * BIAS_BYTES,
        overhead_bytes=per_tensor_overhead_bytes * tensors,
    )
