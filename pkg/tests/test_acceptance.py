"""The eleven acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import random
from dataclasses import replace

import numpy as np

from costlab.hwmodel import CANONICAL_CONFIGS, AlignmentClass, LayerClass, classify_alignment, estimate, find_profile, fit_check, speedup
from costlab.lint import lint_model
from costlab.measurelab import ParetoPoint, calibrate, fit_latency_energy, linear_fit, load_log, pareto_front, points_from_records, synthesize_log
from costlab.model_ir import Conv2D, Dense, Flatten, ModelSpec, TensorShape, validate
from costlab.opcount import count_conv2d, count_dense, count_dw_conv2d, count_model, footprint
from costlab.sweepgen import DATA_DIR, SweepSpec, calibration_probe, fixtures, generate

from oracles import dominance_front, loop_nest_conv, loop_nest_dense

U, Q_CMSIS = CANONICAL_CONFIGS["U"], CANONICAL_CONFIGS["Q+CMSIS"]


def test_01_opcount_oracle(criterion):
    c = criterion(1, "op-count oracle equivalence, 500 configs")
    rng = random.Random(1)
    mismatches = checked = 0
    while checked < 500:
        kind = rng.choice(["conv", "dw", "dense"])
        if kind == "dense":
            n_in, n_out = rng.randint(1, 64), rng.randint(1, 64)
            got = count_dense(n_in, n_out)
            mismatches += (got.maccs, got.flops) != loop_nest_dense(n_in, n_out)
            checked += 1
            continue
        h, w, ch = rng.randint(1, 9), rng.randint(1, 9), rng.randint(1, 4)
        kernel = (rng.randint(1, 4), rng.randint(1, 4))
        stride = (rng.randint(1, 3), rng.randint(1, 3))
        padding = (rng.randint(0, 2), rng.randint(0, 2))
        if w + 2 * padding[0] < kernel[0] or h + 2 * padding[1] < kernel[1]:
            continue
        shape = TensorShape(h, w, ch)
        if kind == "conv":
            filters = rng.randint(1, 4)
            got = count_conv2d(shape, kernel, stride, padding, filters)
            expected = loop_nest_conv(h, w, ch, kernel, stride, padding, filters)
        else:
            got = count_dw_conv2d(shape, kernel, stride, padding)
            expected = loop_nest_conv(h, w, ch, kernel, stride, padding)
        mismatches += (got.maccs, got.flops) != expected
        checked += 1
    c.check(mismatches == 0, f"{mismatches} mismatches in {checked} configs")


def test_02_dense_identity(criterion):
    c = criterion(2, "dense FLOPs = 2(params - N_out), 200 pairs")
    rng = random.Random(2)
    bad = 0
    for _ in range(200):
        n_in, n_out = rng.randint(1, 1 << 16), rng.randint(1, 1 << 16)
        cnt = count_dense(n_in, n_out)
        bad += cnt.flops != 2 * (cnt.params - n_out)
    c.check(bad == 0, f"{bad} violations")


def test_03_fixture_ratios(criterion):
    c = criterion(3, "fixture ratios")
    fx = fixtures()
    lenet, resnet = count_model(fx["lenet"]).total, count_model(fx["resnet20"]).total
    params = resnet.params / lenet.params
    maccs = resnet.maccs / lenet.maccs
    ok = 3.0 <= params <= 3.8 and abs(maccs / 141.3 - 1) <= 0.15
    c.check(ok, f"params {params:.3f}x (band 3.0-3.8), MACCs {maccs:.2f}x ({100 * (maccs / 141.3 - 1):+.1f} % vs 141.3x)")


def test_04_footprint(criterion):
    c = criterion(4, "LeNet footprint")
    lenet = fixtures()["lenet"]
    full, small = footprint(lenet, 32), footprint(lenet, 8)
    dev = full.total_kib / 320.28 - 1
    ratio = small.total_bytes / full.total_bytes
    ok = abs(dev) <= 0.02 and 0.25 <= ratio <= 0.28
    c.check(ok, f"{full.total_kib:.2f} KiB ({100 * dev:+.2f} % vs 320.28), int8/float32 {ratio:.4f}")


def test_05_fit_check(criterion):
    c = criterion(5, "ResNet-20 fit on L4")
    l4 = find_profile("L4")
    resnet = fixtures()["resnet20"]
    float_fit = fit_check(resnet, l4, CANONICAL_CONFIGS["U+FPU"])
    q_fit = fit_check(resnet, l4, Q_CMSIS)
    ok = (not float_fit.fits) and float_fit.reason == "flash" and q_fit.fits
    c.check(ok, f"float: {float_fit.reason or 'fits'} ({float_fit.flash_needed} B), int8: {'fits' if q_fit.fits else q_fit.reason} ({q_fit.flash_needed} B)")


def test_06_speedup_band(criterion):
    c = criterion(6, "LeNet U vs Q+CMSIS speedup on L4")
    ratio = speedup(fixtures()["lenet"], find_profile("L4"), U, Q_CMSIS)
    c.check(10 <= ratio <= 17, f"{ratio:.2f}x (band 10-17)")


def test_07_pareto(criterion):
    c = criterion(7, "Pareto front vs brute force")
    rng = np.random.default_rng(7)
    mismatched = 0
    for k in range(100):
        n = int(rng.integers(1, 1001))
        # half the sets are drawn on a coarse grid to force ties
        raw = rng.integers(1, 30, size=(n, 2)).astype(float) if k % 2 else rng.uniform(0.1, 100, size=(n, 2))
        points = [ParetoPoint(str(i), a, b) for i, (a, b) in enumerate(raw)]
        got = sorted(int(p.label) for p in pareto_front(points))
        expected = np.flatnonzero(dominance_front(raw[:, 0], raw[:, 1])).tolist()
        mismatched += got != expected
    front = pareto_front(points_from_records(load_log(DATA_DIR / "lenet_boards_totals.csv")))
    f4_on_front = [p.label for p in front if p.label.startswith("F4")]
    c.check(mismatched == 0 and not f4_on_front, f"{mismatched}/100 sets differ; F4 on bundled front: {f4_on_front or 'none'}")


def test_08_regression(criterion):
    c = criterion(8, "latency/energy regression")
    x = np.linspace(0.5, 300, 50)
    exact = linear_fit(x, 0.03 * x + 0.2)
    layers = fit_latency_energy(load_log(DATA_DIR / "lenet_l4_layers.csv"), "per-layer")
    ok = abs(exact.pearson_r - 1) <= 1e-12 and layers.pearson_r >= 0.99
    c.check(ok, f"exact-line |r-1| = {abs(exact.pearson_r - 1):.1e}, bundled log r = {layers.pearson_r:.5f}")


def test_09_calibration_round_trip(criterion):
    c = criterion(9, "noiseless calibration round trip")
    truth = find_profile("L4")
    model = calibration_probe()
    got = calibrate(synthesize_log(model, truth, list(CANONICAL_CONFIGS.values())), model, find_profile("F7")).profile
    errors = [abs(got.delta_nc[k] / truth.delta_nc[k] - 1) for k in LayerClass]
    errors += [abs(got.gain[k][a] / truth.gain[k][a] - 1) for k in LayerClass for a in AlignmentClass]
    errors.append(abs(got.avg_power_mw / truth.avg_power_mw - 1))
    worst = max(errors)
    c.check(worst <= 1e-3, f"worst relative error {worst:.2e} over {len(errors)} parameters")


def test_10_lint_soundness(criterion):
    c = criterion(10, "lint gain soundness")
    l4 = find_profile("L4")

    def chain(channels):
        return ModelSpec(
            "chain",
            TensorShape(16, 16, 4),
            (Conv2D((3, 3), (1, 1), (1, 1), channels), Conv2D((3, 3), (1, 1), (1, 1), 16), Flatten(), Dense(10)),
            weight_bits=8,
        )

    (finding,) = [f for f in lint_model(chain(7), l4) if f.rule_id == "R1"]
    gain_err = abs(finding.estimated_gain - 7.03 / 6.42)
    # 15 -> 16 channels: MACC growth 16/15 < 7.03/6.42, so the flagged layer gets faster
    (wide,) = [f for f in lint_model(chain(15), l4) if f.rule_id == "R1"]
    before = estimate(chain(15), l4, Q_CMSIS).per_layer[1]
    after = estimate(chain(wide.suggestion), l4, Q_CMSIS).per_layer[1]
    growth = after.maccs / before.maccs
    reduction = before.latency_ms / after.latency_ms
    ok = gain_err <= 1e-6 and after.latency_ms < before.latency_ms and abs(reduction - wide.estimated_gain / growth) <= 1e-6
    c.check(
        ok,
        f"C_in 7 gain {finding.estimated_gain:.6f} (err {gain_err:.1e}); 15->16: MACCs x{growth:.4f}, "
        f"latency {before.latency_ms:.4f} -> {after.latency_ms:.4f} ms",
    )


def test_11_sweep(criterion):
    c = criterion(11, "conv_filters sweep 1..64")
    result = generate(SweepSpec("conv_filters", 1, 64))
    for _, model in result.models:
        validate(model)
    maccs = [r["maccs"] for r in result.manifest]
    increasing = all(a < b for a, b in zip(maccs, maccs[1:]))

    def rule(n):
        return "div4" if n % 4 == 0 else "even" if n % 2 == 0 else "odd"

    labels_ok = all(r["alignment"] == rule(r["y"]) == classify_alignment(r["y"]).value for r in result.manifest)
    ok = len(result.models) == 64 and increasing and labels_ok
    c.check(ok, f"{len(result.models)} models, MACCs increasing: {increasing}, labels match: {labels_ok}")
