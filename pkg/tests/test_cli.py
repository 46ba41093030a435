import csv
import json
import subprocess
import sys

import pytest

from robinspec.cli import main

INTERVAL = {"kind": "interval", "length": 1.0, "n": 201}
BUMP_Q = {"q": {"kind": "gaussian_bump", "center": [0.3], "width": 0.1, "height": 3.0}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def results(out):
    return json.loads((out / "results.json").read_text())


def test_forward_interval(tmp_path):
    out = tmp_path / "fwd"
    cfg = write(tmp_path, {"scenario": "forward", "domain": INTERVAL, "params": {"K": 5}})
    assert main(["run", "--config", cfg, "--output-dir", str(out)]) == 0
    r = results(out)
    assert len(r["eigenvalues"]) == 5 and r["ok"]
    manifest = json.loads((out / "manifest.json").read_text())
    for path in manifest["files"].values():
        text = open(path).read()
        if path.endswith(".json"):
            json.loads(text)
        else:
            rows = list(csv.reader(text.splitlines()))
            assert rows[0][0] == "arc" and len(rows) == 3
    assert manifest["exit_code"] == 0 and manifest["version"]


def test_missing_sigma_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, {"scenario": "recover", "domain": INTERVAL})
    assert main(["run", "--config", cfg, "--output-dir", str(tmp_path / "o")]) == 2
    assert "sigma" in capsys.readouterr().err


@pytest.mark.parametrize("params, field", [({"h": -1.0}, "params.h"), ({"K": 2.5}, "params.K"),
                                           ({"zero_tol": 0}, "params.zero_tol")])
def test_bad_params_name_the_field(tmp_path, capsys, params, field):
    cfg = write(tmp_path, {"scenario": "forward", "domain": INTERVAL, "params": params})
    assert main(["run", "--config", cfg]) == 2
    assert field in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_record_then_replay_is_identical(tmp_path):
    base = {"domain": INTERVAL, "fields": BUMP_Q, "sigma": [0.0, 0.5], "params": {"K": 3}}
    rec = tmp_path / "rec"
    assert main(["run", "--config", write(tmp_path, {**base, "scenario": "record-oracle"}),
                 "--output-dir", str(rec)]) == 0
    fwd, rep = tmp_path / "fwd", tmp_path / "rep"
    assert main(["run", "--config", write(tmp_path, {**base, "scenario": "recover"}, "f.json"),
                 "--output-dir", str(fwd)]) == 0
    replay_cfg = {**base, "scenario": "recover", "oracle": {"kind": "replay", "path": str(rec / "oracle.json")}}
    assert main(["run", "--config", write(tmp_path, replay_cfg, "r.json"), "--output-dir", str(rep)]) == 0
    assert (fwd / "results.json").read_bytes() == (rep / "results.json").read_bytes()
    assert (fwd / "traces.csv").read_bytes() == (rep / "traces.csv").read_bytes()

    # a plan the recording never issued
    replay_cfg["params"] = {"K": 3, "h": 1e-3}
    out = tmp_path / "miss"
    assert main(["run", "--config", write(tmp_path, replay_cfg, "m.json"), "--output-dir", str(out)]) == 1
    err = results(out)["error"]
    assert err["type"] == "MissingQueryError" and err["key"] in err["message"]
    assert not (out / "traces.csv").exists()


def test_empty_plan_writes_empty_replay_file(tmp_path):
    cfg = {"scenario": "record-oracle", "domain": INTERVAL, "sigma": [0.0, 0.5], "params": {"K": 0}}
    out = tmp_path / "o"
    assert main(["run", "--config", write(tmp_path, cfg), "--output-dir", str(out)]) == 0
    assert json.loads((out / "oracle.json").read_text()) == []


def test_rerun_is_byte_identical_and_seed_flag_wins(tmp_path):
    cfg = {"scenario": "simplify", "domain": {"kind": "rectangle", "a": 1, "b": 1, "nx": 21, "ny": 21},
           "sigma": [0.0, 1.0], "params": {"k_max": 6, "eps": 0.1}, "seed": 1}
    path = write(tmp_path, cfg)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", "--config", path, "--output-dir", str(a)]) == 0
    assert main(["run", "--config", path, "--output-dir", str(b)]) == 0
    assert (a / "results.json").read_bytes() == (b / "results.json").read_bytes()
    assert main(["run", "--config", path, "--output-dir", str(c), "--seed", "5"]) == 0
    assert json.loads((c / "manifest.json").read_text())["config"]["seed"] == 5
    r = results(a)
    assert r["perturbation_sup"] < 0.1 and r["perturbation_outside_sigma"] == 0.0
    assert min(r["gaps"]) > 0


def test_hadamard_scenario(tmp_path):
    cfg = {"scenario": "hadamard-check", "domain": INTERVAL, "sigma": [0.0, 1.0],
           "params": {"K": 6, "n_directions": 2, "shape": "hat", "h": 1e-4}}
    out = tmp_path / "h"
    assert main(["run", "--config", write(tmp_path, cfg), "--output-dir", str(out)]) == 0
    r = results(out)
    assert r["n_flagged"] == 0 and r["max_rel_error"] <= 1e-4


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"scenario": "forward", "domain": INTERVAL, "params": {"K": 2}})
    proc = subprocess.run([sys.executable, "-m", "robinspec", "run", "--config", cfg,
                           "--output-dir", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.slow
def test_end_to_end_square_benchmark(tmp_path):
    cfg = {"scenario": "end-to-end", "domain": {"kind": "rectangle", "a": 1, "b": 1, "nx": 101, "ny": 101},
           "fields": {"q": {"kind": "gaussian_bump", "center": [0.5, 0.5], "width": 0.2, "height": 5.0},
                      "omega0": {"kind": "constant", "v": 0.3}},
           "sigma": [0.0, 1.0], "params": {"K": 12}}
    out = tmp_path / "e2e"
    assert main(["run", "--config", write(tmp_path, cfg), "--output-dir", str(out)]) == 0
    r = results(out)
    assert r["max_trace_err"] <= 0.02
    assert [p["k"] for p in r["per_k"]] == list(range(1, 13))
