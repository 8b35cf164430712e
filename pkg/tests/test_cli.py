import json
import os
from pathlib import Path

import pytest

from qgt import io
from qgt.cli import main
from qgt.tomography import ReferenceHistograms, poisson_histograms

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_PIPELINE = {
    "noise": "table1",
    "trials": 100,
    "ml": {"tol": 1e-8},
    "bootstrap": {"resamples": 5},
    "lr_test": {"resamples": 100},
}


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    return main(["--out-dir", str(out), *argv]), out


def _manifest_ok(out):
    man = json.loads((out / "manifest.json").read_text())
    listed = set(man["output_paths"])
    on_disk = {p for p in os.listdir(out) if p != "manifest.json"}
    assert listed == on_disk
    assert man["tool_version"]
    return man


# ---------------------------------------------------------------- gates
def test_gates_verify_ok(tmp_path, capsys):
    code, out = _run(tmp_path, "g", "gates", "verify", "--json")
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert all(r["passed"] for r in report)
    _manifest_ok(out)


def test_gates_verify_mutation(tmp_path, capsys):
    code, _ = _run(tmp_path, "g", "gates", "verify", "--perturb", "phase_gate_post=0.1")
    assert code == 3
    assert "FAIL  composite_cnot" in capsys.readouterr().out


def test_gates_verify_unknown_phase(tmp_path):
    code, _ = _run(tmp_path, "g", "gates", "verify", "--perturb", "nope=0.1")
    assert code == 1


# ---------------------------------------------------------------- protocol
def test_protocol_simulate(tmp_path):
    code, out = _run(tmp_path, "p", "protocol", "simulate", "--input", "u+",
                     "--noise", str(CONFIGS / "noise_table1.json"), "--shots", "20", "--seed", "3")
    assert code == 0
    lines = (out / "traces.jsonl").read_text().splitlines()
    assert len(lines) == 20
    trace = json.loads(lines[0])
    assert len(trace["messages"]) == 2
    man = _manifest_ok(out)
    assert man["seed"] == 3


def test_protocol_bad_input(tmp_path):
    code, _ = _run(tmp_path, "p", "protocol", "simulate", "--input", "zz")
    assert code == 1


# ---------------------------------------------------------------- tomography chain
@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tomo")
    assert main(["--out-dir", str(tmp), "tomography", "simulate", "--preset", "table1",
                 "--trials", "200", "--seed", "4"]) == 0
    return tmp / "dataset.json"


def test_tomography_design(tmp_path):
    code, out = _run(tmp_path, "d", "tomography", "design")
    assert code == 0
    design = json.loads((out / "design.json").read_text())
    assert len(design["inputs"]) * len(design["bases"]) == 144


def test_tomography_simulate_schema(dataset):
    obj = json.loads(dataset.read_text())
    assert set(obj) == {"trials", "counts", "inputs", "bases"}
    assert len(obj["counts"]) == 16 and len(obj["counts"][0]) == 36
    _manifest_ok(dataset.parent)


def test_tomography_estimate(tmp_path, dataset):
    code, out = _run(tmp_path, "e", "tomography", "estimate", "--data", str(dataset))
    assert code == 0
    summary = json.loads((out / "estimate.json").read_text())
    assert 0.8 < summary["fidelity"] < 0.95
    assert summary["converged"]
    rows = (out / "ptm.csv").read_text().strip().splitlines()
    assert len(rows) == 17 and len(rows[1].split(",")) == 17
    _manifest_ok(out)


def test_tomography_estimate_nonconverged(tmp_path, dataset):
    code, _ = _run(tmp_path, "e", "tomography", "estimate", "--data", str(dataset), "--max-iterations", "2")
    assert code == 2


@pytest.mark.parametrize("method", ["parametric", "nonparametric"])
def test_tomography_bootstrap(tmp_path, dataset, method):
    code, out = _run(tmp_path, "b", "tomography", "bootstrap", "--data", str(dataset), "--method", method,
                     "--resamples", "8", "--seed", "1", "--tol", "1e-8")
    assert code == 0
    res = json.loads((out / "bootstrap.json").read_text())
    assert len(res["estimates"]) == 8 and res["method"] == method
    assert res["ci"]["low"] <= res["ci"]["high"]
    assert (out / "bootstrap_hist.csv").read_text().startswith("bin_low,bin_high,count")
    _manifest_ok(out)


def test_tomography_lrtest(tmp_path, dataset):
    code, out = _run(tmp_path, "l", "tomography", "lrtest", "--data", str(dataset),
                     "--resamples", "100", "--tol", "1e-7")
    assert code == 0
    res = json.loads((out / "lrtest.json").read_text())
    assert res["z"] == pytest.approx((res["lambda_observed"] - res["lambda_boot_mean"]) / res["lambda_boot_sd"])


def test_bad_dataset(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"trials": [[1]], "counts": [[1]], "inputs": ["uu"], "bases": ["ZZ"]}))
    code, _ = _run(tmp_path, "e", "tomography", "estimate", "--data", str(bad))
    assert code == 1


# ---------------------------------------------------------------- budget, timing, povm
def test_budget_and_timing(tmp_path, capsys):
    code, out = _run(tmp_path, "b", "budget", "--mc", "100")
    assert code == 0
    res = json.loads((out / "budget.json").read_text())
    assert 0.87 <= res["model_fidelity"] <= 0.89
    assert res["sum"] == pytest.approx(0.156)
    code, out = _run(tmp_path, "t", "timing")
    assert code == 0
    rep = json.loads((out / "timing.json").read_text())
    assert rep["cooling_shuttling_fraction"] > 0.5
    assert "total" in capsys.readouterr().out


def test_povm_fit(tmp_path):
    hists = ReferenceHistograms((poisson_histograms(30, 1.5, 5000, 1), poisson_histograms(25, 2, 5000, 2)))
    path = tmp_path / "hists.json"
    path.write_text(json.dumps(hists.to_json()))
    code, out = _run(tmp_path, "f", "povm", "fit", "--hists", str(path))
    assert code == 0
    model = json.loads((out / "readout.json").read_text())
    assert len(model["p"]) == 2 and all(0 <= p < 0.05 for p in model["p"])


def test_povm_fit_degenerate(tmp_path):
    h = {"0": 1.0, "1": 2.0}
    path = tmp_path / "hists.json"
    path.write_text(json.dumps({"ions": [{"bright": h, "dark": h}]}))
    code, _ = _run(tmp_path, "f", "povm", "fit", "--hists", str(path))
    assert code == 1


# ---------------------------------------------------------------- pipeline
def test_pipeline_invalid_json_writes_nothing(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{ not json")
    code, out = _run(tmp_path, "out", "pipeline", "--config", str(cfg))
    assert code == 1
    assert not out.exists() or not os.listdir(out)


@pytest.mark.parametrize("raw", [
    {"noise": "table1", "colour": "blue"},
    {"noise": "bogus"},
    {"trials": 0},
    {"lr_test": {"resamples": 10}},
    {"noise": {"depol_bell": 2.0}},
])
def test_pipeline_bad_config(tmp_path, raw):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(raw))
    code, out = _run(tmp_path, "out", "pipeline", "--config", str(cfg))
    assert code == 1
    assert not out.exists()


def test_pipeline_deterministic(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL_PIPELINE))
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        code, out = _run(tmp_path, name, "pipeline", "--config", str(cfg), "--seed", "5", "--threads", threads)
        assert code == 0
        outs.append(out)
    man = _manifest_ok(outs[0])
    assert {"dataset.json", "choi.json", "ptm.csv", "summary.json"} <= set(man["output_paths"])
    for name in man["output_paths"]:
        ref = (outs[0] / name).read_bytes()
        assert (outs[1] / name).read_bytes() == ref, name
        assert (outs[2] / name).read_bytes() == ref, name
    mans = [json.loads((o / "manifest.json").read_text()) for o in outs]
    for m in mans:
        m.pop("argv")
    assert mans[0] == mans[1] == mans[2]
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert set(summary) >= {"fidelity", "ci", "z"}


def test_pipeline_noiseless_large_n(tmp_path):
    code, out = _run(tmp_path, "n", "pipeline", "--config", str(CONFIGS / "noiseless.json"), "--seed", "1")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["fidelity"] >= 0.999
    assert summary["ci"]["high"] - summary["ci"]["low"] < 0.005


# ---------------------------------------------------------------- serialization
def test_dumps_uses_17_significant_digits():
    text = io.dumps({"x": 0.1, "y": [1, 2.5], "z": None})
    assert '"x": 0.10000000000000001' in text
    assert json.loads(text) == {"x": 0.1, "y": [1, 2.5], "z": None}


def test_substreams_are_distinct_and_stable():
    assert io.substream_seed(1, "dataset") == io.substream_seed(1, "dataset")
    assert io.substream_seed(1, "dataset") != io.substream_seed(1, "bootstrap")
    assert io.substream_seed(1, "dataset") != io.substream_seed(2, "dataset")
