import json
import subprocess
import sys

import numpy as np
import pytest

from relulip.cli import main
from relulip.network import NetworkParams, network_from_arrays


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def net_file(tmp_path):
    path = tmp_path / "net.json"
    assert run("sample", "--d", 4, "--width", 64, "--depth", 2, "--bias", "zero", "--seed", 1, "--out", path) == 0
    return path


def test_sample_round_trips_and_embeds_invocation(net_file, tmp_path):
    net = NetworkParams.load(net_file)
    assert (net.d, net.N, net.L) == (4, 64, 2)
    again = tmp_path / "again.json"
    NetworkParams.save(net, again)
    assert NetworkParams.load(again).same_parameters(net)
    doc = json.loads(net_file.read_text())
    assert doc["invocation"]["seed"] == 1
    assert doc["invocation"]["flags"]["width"] == 64


def test_sample_records_bias_spec(tmp_path):
    path = tmp_path / "b.json"
    assert run("sample", "--d", 3, "--width", 8, "--depth", 1, "--bias", "gaussian:0.1", "--seed", 2, "--out", path) == 0
    assert NetworkParams.load(path).bias_spec.sigma == 0.1


def test_sample_without_seed_records_generated_seed(tmp_path):
    path = tmp_path / "s.json"
    assert run("sample", "--d", 2, "--width", 4, "--depth", 1, "--out", path) == 0
    doc = json.loads(path.read_text())
    assert isinstance(doc["invocation"]["seed"], int)
    assert doc["seed"] is not None


@pytest.mark.parametrize(
    "argv",
    [
        ["sample", "--d", "4", "--width", "0", "--depth", "2", "--out", "x.json"],
        ["sample", "--d", "4", "--width", "8", "--depth", "2", "--bias", "cauchy:1", "--out", "x.json"],
        ["sample", "--d", "4", "--width", "8"],
        ["lip", "--net", "x.json", "--p", "0.5"],
        ["lip", "--net", "x.json", "--method", "magic"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_lip_exact1d_on_identity_network(tmp_path):
    path = tmp_path / "remark.json"
    network_from_arrays([np.array([[1.0], [-1.0]]), np.array([[1.0, -1.0]])]).save(path)
    out = tmp_path / "est.json"
    assert run("lip", "--net", path, "--method", "exact1d", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["value"] == 1.0
    assert doc["kind"] == "exact"


def test_lip_upper_dominates_sample(net_file, tmp_path):
    up, lo = tmp_path / "u.json", tmp_path / "l.json"
    assert run("lip", "--net", net_file, "--method", "upper", "--out", up) == 0
    assert run("lip", "--net", net_file, "--method", "sample", "--samples", 2000, "--seed", 3, "--out", lo) == 0
    assert json.loads(up.read_text())["value"] >= json.loads(lo.read_text())["value"]


def test_lip_point_at_given_x(net_file, tmp_path):
    out = tmp_path / "p.json"
    assert run("lip", "--net", net_file, "--method", "point", "--x", "1,0,0,0", "--p", "inf", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["argmax"] == [1.0, 0.0, 0.0, 0.0]
    assert doc["p"] == "inf"
    assert run("lip", "--net", net_file, "--method", "point", "--x", "1,0") == 2


@pytest.mark.parametrize("method", ["circle", "exact1d"])
def test_lip_incompatible_shape_exits_3(net_file, method):
    assert run("lip", "--net", net_file, "--method", method) == 3


def test_lip_exact1d_biased_needs_interval(tmp_path):
    path = tmp_path / "b.json"
    run("sample", "--d", 1, "--width", 4, "--depth", 2, "--bias", "gaussian:0.5", "--seed", 5, "--out", path)
    assert run("lip", "--net", path, "--method", "exact1d") == 3
    assert run("lip", "--net", path, "--method", "exact1d", "--interval=-inf,inf") == 0


def test_lip_circle_on_planar_net(tmp_path):
    path = tmp_path / "c.json"
    run("sample", "--d", 2, "--width", 8, "--depth", 2, "--seed", 5, "--out", path)
    assert run("lip", "--net", path, "--method", "circle") == 0


def test_lip_corrupt_or_missing_network_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("lip", "--net", bad) == 2
    assert run("lip", "--net", tmp_path / "missing.json") == 2


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return path


SWEEP = {"experiment": "pointwise", "param": "d", "grid": [4, 8, 16], "fixed": {"N": 64, "L": 2, "p": 2}, "trials": 4, "seed": 9}


def test_sweep_is_byte_identical_across_runs(tmp_path):
    cfg = _write(tmp_path / "s.json", SWEEP)
    assert run("sweep", "--config", cfg, "--out-dir", tmp_path / "a") == 0
    assert run("sweep", "--config", cfg, "--out-dir", tmp_path / "b", "--threads", 2) == 0
    a = (tmp_path / "a" / "sweep.csv").read_text()
    assert a == (tmp_path / "b" / "sweep.csv").read_text().replace('"threads": 2', '"threads": null')
    lines = a.splitlines()
    assert lines[0].startswith("# invocation: ")
    assert lines[1] == "param,value,mean,std,q05,q95,n"
    assert json.loads((tmp_path / "a" / "sweep.json").read_text())["invocation"]["seed"] == 9


def test_sweep_schema_violation_lists_fields(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.json", {**SWEEP, "param": "q", "trials": 0, "extra": 1})
    assert run("sweep", "--config", cfg, "--out-dir", tmp_path / "o") == 2
    err = capsys.readouterr().err
    for field in ("param", "trials", "extra"):
        assert field in err


def test_sweep_semantic_violation_exits_2(tmp_path):
    cfg = _write(tmp_path / "bad.json", {**SWEEP, "grid": [8, 4]})
    assert run("sweep", "--config", cfg, "--out-dir", tmp_path / "o") == 2


def test_missing_config_exits_2(tmp_path):
    assert run("sweep", "--config", tmp_path / "none.json", "--out-dir", tmp_path / "o") == 2
    assert run("tess", "--config", tmp_path / "none.json", "--out-dir", tmp_path / "o") == 2
    assert run("verify", "--config", tmp_path / "none.json", "--out-dir", tmp_path / "o") == 2


def test_tess_flip_fraction(tmp_path):
    cfg = _write(tmp_path / "t.json", {"experiment": "flip_fraction", "n": 8, "m": 4000, "angle_grid": [0.25], "trials": 3, "seed": 1})
    assert run("tess", "--config", cfg, "--out-dir", tmp_path / "o") == 0
    rows = (tmp_path / "o" / "tess.csv").read_text().splitlines()
    assert rows[1] == "angle,mean_fraction,std,m,trials"
    assert abs(float(rows[2].split(",")[1]) - 0.25) < 0.03


def test_tess_local_max_and_schema(tmp_path):
    cfg = _write(tmp_path / "t.json", {"experiment": "local_max", "n": 8, "m": 512, "eps": 0.01, "pairs": 50, "seed": 1})
    assert run("tess", "--config", cfg, "--out-dir", tmp_path / "o") == 0
    assert json.loads((tmp_path / "o" / "tess.json").read_text())["max_fraction"] <= 0.05
    bad = _write(tmp_path / "b.json", {"experiment": "local_max", "n": 8, "m": 512})
    assert run("tess", "--config", bad, "--out-dir", tmp_path / "o") == 2


def test_verify_subset_and_exit_codes(tmp_path):
    out = tmp_path / "v"
    assert run("verify", "--only", "telescoping", "flip_fraction", "--out-dir", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert [e["name"] for e in manifest["checks"]] == ["telescoping", "flip_fraction"]
    assert manifest["invocation"]["subcommand"] == "verify"
    assert run("verify", "--only", "nope", "--out-dir", out) == 2


def test_verify_failed_check_exits_nonzero(tmp_path):
    bad = tmp_path / "net.json"
    bad.write_text("[]")
    cfg = _write(tmp_path / "c.json", {"checks": ["network_io"], "network_file": str(bad)})
    assert run("verify", "--config", cfg, "--out-dir", tmp_path / "v") == 1


def test_verify_config_schema(tmp_path):
    cfg = _write(tmp_path / "c.json", {"checks": ["telescoping"], "seeds": 3})
    assert run("verify", "--config", cfg, "--out-dir", tmp_path / "v") == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "relulip", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "relulip" in res.stdout
