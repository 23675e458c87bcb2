from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from costlab.hwmodel import classify_alignment
from costlab.model_ir import Conv2D, Dense, Flatten, ModelSpec, TensorShape, infer_shapes, load_model, validate
from costlab.opcount import count_model, footprint
from costlab.sweepgen import (
    FAMILIES,
    SweepError,
    SweepSpec,
    family_template,
    fixtures,
    generate,
    write_sweep,
)

from oracles import loop_nest_conv, loop_nest_dense


def test_conv_filters_alignment_sequence():
    result = generate(SweepSpec("conv_filters", 4, 8))
    assert [y for y, _ in result.models] == [4, 5, 6, 7, 8]
    assert [row["alignment"] for row in result.manifest] == ["div4", "odd", "even", "odd", "div4"]


def test_single_value_dense_sweep():
    base, (index, name) = family_template("dense")
    result = generate(SweepSpec("dense", 16, 16))
    assert len(result.models) == 1
    y, model = result.models[0]
    assert y == 16
    assert model.layers == base.layers
    assert model.layers[index].units == 16


@pytest.mark.parametrize("family", FAMILIES)
def test_benchmarked_layer_sees_y(family):
    result = generate(SweepSpec(family, 1, 12))
    for y, model in result.models:
        shapes = infer_shapes(model)
        bench_in = shapes[result.benchmark_index]
        assert (bench_in.size if family == "dense" else bench_in.channels) == y


@pytest.mark.parametrize("family", FAMILIES)
def test_manifest_maccs_match_brute_force_and_increase(family):
    result = generate(SweepSpec(family, 1, 24, 1))
    maccs = [row["maccs"] for row in result.manifest]
    assert all(a < b for a, b in zip(maccs, maccs[1:]))
    for (y, model), row in zip(result.models, result.manifest):
        shape = infer_shapes(model)[result.benchmark_index]
        layer = model.layers[result.benchmark_index]
        if family == "dense":
            expected = loop_nest_dense(shape.size, layer.units)[0]
        elif family == "conv_filters":
            expected = loop_nest_conv(shape.height, shape.width, y, layer.kernel, layer.stride, layer.padding, layer.filters)[0]
        else:
            expected = loop_nest_conv(shape.height, shape.width, y, layer.kernel, layer.stride, layer.padding)[0]
        assert row["maccs"] == expected


@given(family=st.sampled_from(FAMILIES), start=st.integers(1, 40), span=st.integers(0, 20), step=st.integers(1, 5))
def test_only_the_slot_differs(family, start, span, step):
    result = generate(SweepSpec(family, start, start + span, step))
    _, (index, name) = family_template(family)
    for (_, a), (_, b) in zip(result.models, result.models[1:]):
        diff = [i for i, (la, lb) in enumerate(zip(a.layers, b.layers)) if la != lb]
        assert diff == [index]
        assert replace(a.layers[index], **{name: 0}) == replace(b.layers[index], **{name: 0})
    for row in result.manifest:
        assert row["alignment"] == classify_alignment(row["y"]).value


def test_custom_base_and_slot():
    base = ModelSpec("b", TensorShape(6, 6, 2), (Conv2D((3, 3), (1, 1), (0, 0), 1), Conv2D((3, 3), (1, 1), (0, 0), 4)))
    result = generate(SweepSpec("conv_filters", 2, 3, base=base, slot=(0, "filters")))
    assert [m.layers[0].filters for _, m in result.models] == [2, 3]


def test_invalid_instantiation_reports_y():
    base = ModelSpec("b", TensorShape(1, 1, 4), (Dense(3), Dense(2)))
    # a valid slot, but a base whose later layer is broken for every y
    broken = replace(base, layers=(Dense(3), Conv2D((3, 3), (1, 1), (0, 0), 1)))
    with pytest.raises(SweepError) as info:
        generate(SweepSpec("dense", 5, 6, base=broken, slot=(0, "units")))
    assert info.value.y == 5


@pytest.mark.parametrize(
    "kwargs",
    [dict(family="lstm", start=1, stop=2), dict(family="dense", start=3, stop=2), dict(family="dense", start=1, stop=2, step=0)],
)
def test_spec_invariants(kwargs):
    with pytest.raises(ValueError):
        SweepSpec(**kwargs)


def test_write_sweep(tmp_path):
    result = generate(SweepSpec("dwconv_channels", 1, 5, 2))
    manifest = write_sweep(result, tmp_path)
    lines = manifest.read_text().splitlines()
    assert lines[0] == "y,maccs,alignment,file"
    assert [line.split(",")[3] for line in lines[1:]] == ["dwconv_channels_y1.json", "dwconv_channels_y3.json", "dwconv_channels_y5.json"]
    for (y, model), line in zip(result.models, lines[1:]):
        loaded = load_model(tmp_path / line.split(",")[3])
        assert loaded == model
        validate(loaded)


def test_fixture_shapes_and_bands():
    fx = fixtures()
    lenet, resnet = fx["lenet"], fx["resnet20"]
    assert lenet.input == TensorShape(28, 28, 1)
    assert resnet.input == TensorShape(32, 32, 3)
    assert infer_shapes(lenet)[-1] == TensorShape(1, 1, 10)
    assert infer_shapes(resnet)[-1] == TensorShape(1, 1, 10)
    lc, rc = count_model(lenet).total, count_model(resnet).total
    assert 3.0 <= rc.params / lc.params <= 3.8
    assert rc.maccs / lc.maccs == pytest.approx(141.3, rel=0.15)
    assert footprint(lenet, 32).total_kib == pytest.approx(320.28, rel=0.02)
    convs = [l for l in resnet.layers if isinstance(l, Conv2D)]
    assert len(convs) == 19
    assert sum(isinstance(l, Dense) for l in resnet.layers) == 1
    assert isinstance(lenet.layers[6], Flatten)
