"""Rebuild the bundled fixtures and synthetic logs in src/costlab/data.

The logs are synthetic: they come from the estimator with the builtin
profiles plus seeded multiplicative noise, not from hardware.

    python tools/regen_data.py
"""
from costlab.hwmodel import CANONICAL_CONFIGS, find_profile
from costlab.measurelab import synthesize_log, write_log
from costlab.model_ir import serialize_model
from costlab.sweepgen import DATA_DIR, calibration_probe, fixtures

CONFIGS = list(CANONICAL_CONFIGS.values())


def main():
    DATA_DIR.mkdir(exist_ok=True)
    models = dict(fixtures(), calibration_probe=calibration_probe())
    for name, model in models.items():
        (DATA_DIR / f"{name}.json").write_text(serialize_model(model), encoding="utf-8")

    # layer-level log for LeNet on the L4, 5 runs per config, 1 % noise
    lenet = models["lenet"]
    records = synthesize_log(lenet, find_profile("L4"), CONFIGS, runs=5, noise=0.01, seed=2021)
    (DATA_DIR / "lenet_l4_layers.csv").write_text(write_log(records), encoding="utf-8")

    # model-level totals for LeNet on all three boards (Pareto example)
    records = []
    for i, board in enumerate(("L4", "F4", "F7")):
        records += synthesize_log(lenet, find_profile(board), CONFIGS, runs=3, noise=0.01, seed=100 + i)
    (DATA_DIR / "lenet_boards_totals.csv").write_text(
        write_log(r for r in records if r.is_total), encoding="utf-8"
    )


if __name__ == "__main__":
    main()
