import csv
import io
import json
import subprocess
import sys

import pytest

from costlab import __version__
from costlab.cli import run
from costlab.hwmodel import find_profile, load_profile
from costlab.opcount import count_model
from costlab.sweepgen import DATA_DIR, lenet

LENET = str(DATA_DIR / "lenet.json")
LAYER_LOG = str(DATA_DIR / "lenet_l4_layers.csv")
BOARD_LOG = str(DATA_DIR / "lenet_boards_totals.csv")


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def cli_json(*argv):
    code, out, err = cli(*argv, "--format", "json")
    assert code in (0, 2), err
    return json.loads(out)


def test_analyze_sums_to_fixture_totals():
    doc = cli_json("analyze", LENET)
    total = count_model(lenet()).total
    layers = doc["payload"]["layers"]
    assert sum(l["maccs"] for l in layers) == total.maccs == doc["payload"]["total"]["maccs"]
    assert sum(l["params"] for l in layers) == total.params
    assert layers[-1]["cumulative_pct"] == pytest.approx(100)
    assert doc["inputs"][0]["path"] == LENET and len(doc["inputs"][0]["sha256"]) == 64


def test_analyze_table():
    code, out, _ = cli("analyze", LENET)
    assert code == 0
    assert "total" in out and f"{count_model(lenet()).total.maccs:,}" in out


def test_analyze_many_keeps_input_order():
    doc = cli_json("analyze", "resnet20", LENET, "lenet", "--jobs", "3")
    assert [p["model"] for p in doc["payload"]] == ["resnet20", "lenet", "lenet"]


def test_envelope_keys():
    doc = cli_json("profiles")
    assert set(doc) == {"tool_version", "subcommand", "inputs", "payload", "warnings"}
    assert doc["tool_version"] == __version__ and doc["subcommand"] == "profiles"


def test_json_is_byte_identical_across_runs():
    first = cli("estimate", LENET, "--profile", "l4", "--quantized", "--cmsis", "--format", "json")
    second = cli("estimate", LENET, "--profile", "l4", "--quantized", "--cmsis", "--format", "json")
    assert first == second


def test_estimate_speedup_subfield():
    q = cli_json("estimate", LENET, "--profile", "l4", "--quantized", "--cmsis")["payload"]
    u = cli_json("estimate", LENET, "--profile", "l4", "--no-fpu")["payload"]
    assert u["config"]["label"] == "U"
    assert q["speedup"]["U"] == pytest.approx(u["total_latency_ms"] / q["total_latency_ms"], rel=1e-12)
    assert q["speedup"]["Q+CMSIS"] == 1.0
    assert q["fit"]["fits"]


def test_estimate_warns_about_placeholder_power():
    code, out, err = cli("estimate", "lenet", "--profile", "F4")
    assert code == 0
    assert "not calibrated" in err


def test_estimate_oversized():
    doc = cli_json("estimate", "resnet20", "--profile", "l4")
    assert doc["payload"]["fit"]["reason"] == "flash"
    assert any("does not fit" in w for w in doc["warnings"])


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        [],
        ["estimate", LENET, "--profile", "l4", "--cmsis"],
        ["estimate", "nonexistent.json", "--profile", "l4"],
        ["estimate", LENET, "--profile", "z80"],
        ["sweep", "--family", "conv_filters", "--from", "5", "--to", "1", "-o", "x"],
    ],
)
def test_errors_exit_1(argv, capsys):
    code, _, _ = cli(*argv)
    assert code == 1


def test_unknown_subcommand_prints_usage(capsys):
    assert cli("frobnicate")[0] == 1
    assert "usage" in capsys.readouterr().err


def test_bad_model_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x",')
    code, _, err = cli("analyze", str(bad))
    assert code == 1 and "error" in err


def test_lint_exit_codes(tmp_path):
    code, out, _ = cli("lint", "resnet20", "--profile", "l4")
    assert code == 2 and "R5" in out
    clean = tmp_path / "clean.json"
    clean.write_text(
        json.dumps(
            {
                "name": "clean",
                "input": {"h": 8, "w": 8, "c": 4},
                "weight_bits": 8,
                "layers": [{"type": "conv2d", "kernel": 3, "filters": 8}, {"type": "flatten"}, {"type": "dense", "units": 4}],
            }
        )
    )
    assert cli("lint", str(clean), "--profile", "l4")[0] == 0
    doc = cli_json("lint", "resnet20", "--profile", "l4")
    assert {f["rule_id"] for f in doc["payload"]["findings"]} >= {"R1", "R5"}


def test_sweep_writes_models_and_manifest(tmp_path):
    code, _, err = cli("sweep", "--family", "conv_filters", "--from", "1", "--to", "6", "-o", str(tmp_path))
    assert code == 0, err
    with open(tmp_path / "manifest.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["y"] for r in rows] == ["1", "2", "3", "4", "5", "6"]
    assert [r["alignment"] for r in rows] == ["odd", "even", "odd", "div4", "odd", "even"]
    for r in rows:
        assert cli("analyze", str(tmp_path / r["file"]))[0] == 0


def test_ingest_writes_csvs(tmp_path):
    doc = cli_json("ingest", LAYER_LOG, "--model", LENET, "-o", str(tmp_path))
    payload = doc["payload"]
    assert payload["records"] == 120
    assert payload["latency_energy_fit"]["per-layer"]["pearson_r"] >= 0.99
    for name in ("delta_by_layer.csv", "delta_by_alignment.csv", "latency_energy.csv"):
        assert (tmp_path / name).read_text().count("\n") > 1
    assert [i["path"] for i in doc["inputs"]] == [LAYER_LOG, LENET]


def test_pareto_csv(tmp_path):
    doc = cli_json("pareto", BOARD_LOG, "-o", str(tmp_path))
    front = doc["payload"]["front"]
    assert front and not any(label.startswith("F4") for label in front)
    with open(tmp_path / "pareto.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["label"] for r in rows if r["on_front"] == "1"} == set(front)


def test_pareto_from_estimate_json(tmp_path):
    docs = [cli_json("estimate", LENET, "--profile", p, "--quantized", "--cmsis") for p in ("l4", "f4", "f7")]
    path = tmp_path / "estimates.json"
    path.write_text(json.dumps(docs))
    front = cli_json("pareto", str(path))["payload"]["front"]
    assert "F4 Q+CMSIS" not in front


def test_calibrate_writes_profile(tmp_path):
    log = tmp_path / "probe.csv"
    assert cli("synth", "calibration_probe", "--profile", "l4", "-o", str(log))[0] == 1  # not a fixture name
    assert cli("synth", str(DATA_DIR / "calibration_probe.json"), "--profile", "l4", "-o", str(log))[0] == 0
    out = tmp_path / "cal.json"
    doc = cli_json("calibrate", str(log), "--model", str(DATA_DIR / "calibration_probe.json"), "--profile", "f7", "-o", str(out))
    assert doc["payload"]["untouched"] == []
    calibrated = load_profile(out)
    assert calibrated.calibrated
    assert calibrated.avg_power_mw == pytest.approx(find_profile("L4").avg_power_mw, rel=1e-6)


def test_synth_seed_is_reproducible():
    a = cli("synth", "lenet", "--profile", "l4", "--noise", "0.05", "--seed", "9")
    b = cli("synth", "lenet", "--profile", "l4", "--noise", "0.05", "--seed", "9")
    c = cli("synth", "lenet", "--profile", "l4", "--noise", "0.05", "--seed", "10")
    assert a == b and a[1] != c[1]


def test_profiles_export_and_env(tmp_path, monkeypatch):
    assert cli("profiles", "--export", str(tmp_path))[0] == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["f4.json", "f7.json", "l4.json"]
    custom = json.loads((tmp_path / "l4.json").read_text())
    custom["name"] = "mine"
    user_dir = tmp_path / "user"
    user_dir.mkdir()
    (user_dir / "mine.json").write_text(json.dumps(custom))
    monkeypatch.setenv("COSTLAB_PROFILE_DIR", str(user_dir))
    names = [p["name"] for p in cli_json("profiles")["payload"]]
    assert "mine" in names
    assert cli_json("profiles", "--show", "mine")["payload"][0]["delta_nc"]["dense"] == 145.2


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "costlab.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("analyze", "estimate", "ingest", "pareto", "calibrate", "sweep", "lint", "profiles"):
        assert name in proc.stdout
