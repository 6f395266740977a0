import json
import os

import pytest

from byzpgd import cli
from byzpgd.harness import to_json


VALID_CONFIG = {
    "problem": "saddle_2d",
    "problem_params": {"lam": 0.5, "b": 1000.0},
    "oracle_mode": "exact",
    "optimizer_source": "theorem2",
    "eps": 0.01,
    "delta_fail": 0.1,
    "seeds": [0, 1],
    "w0": [0.0, 0.0],
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_run_valid_config(tmp_path, capsys):
    cfg = write_config(tmp_path, VALID_CONFIG)
    out = tmp_path / "out"
    code = cli.main(["run", "--config", cfg, "--out", str(out)])
    assert code == 0
    assert (out / "report.json").exists()
    assert (out / "traces" / "seed_0.csv").exists()
    assert (out / "traces" / "seed_1.csv").exists()
    figs = list((out / "figures").glob("*.png"))
    assert figs  # report path renders figures next to the delimited output
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1
    assert 0.0 <= report["aggregate"]["escape_success_rate"] <= 1.0


def test_run_is_byte_identical_across_reruns(tmp_path):
    cfg = write_config(tmp_path, VALID_CONFIG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 0
        outs.append(out)
    assert (outs[0] / "report.json").read_bytes() \
        == (outs[1] / "report.json").read_bytes()
    assert (outs[0] / "traces" / "seed_0.csv").read_bytes() \
        == (outs[1] / "traces" / "seed_0.csv").read_bytes()


def test_run_rejects_alpha_above_half(tmp_path, capsys):
    payload = dict(VALID_CONFIG, alpha=0.6)
    cfg = write_config(tmp_path, payload)
    code = cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "(0, 1/2)" in err


def test_run_nonexistent_config(tmp_path):
    code = cli.main(["run", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "o")])
    assert code == 2


def test_run_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["run", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 2


def test_run_budget_failure_exits_1(tmp_path, capsys):
    payload = {
        "problem": "convex_1d",
        "oracle_mode": "exact",
        "optimizer_source": "manual",
        "manual_config": {"eta": 1e-4, "eps": 1e-9, "r": 0.01, "R": 0.1,
                          "Q": 1, "T_th": 1, "delta_inexact": 0.0,
                          "delta_fail": 0.1, "max_parallel_iters": 5},
        "seeds": [0],
        "w0": [10.0],
    }
    cfg = write_config(tmp_path, payload)
    code = cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "budget_exceeded" in capsys.readouterr().out


def test_out_dir_from_environment(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path, VALID_CONFIG)
    env_out = tmp_path / "env_out"
    monkeypatch.setenv("BYZPGD_OUT", str(env_out))
    monkeypatch.chdir(tmp_path)
    assert cli.main(["run", "--config", cfg]) == 0
    assert (env_out / "report.json").exists()


def test_seed_override_flag(tmp_path):
    cfg = write_config(tmp_path, VALID_CONFIG)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", cfg, "--out", str(out),
                     "--seeds", "5,6,7"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [s["seed"] for s in report["seeds"]] == [5, 6, 7]


def test_derive_params_theorem1(capsys):
    code = cli.main(["derive-params", "--delta", "0.01", "--dim", "1",
                     "--smoothness", "1", "--rho", "1", "--gap", "1",
                     "--delta-fail", "0.1"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["eps"] == pytest.approx(0.03)
    assert payload["r"] == pytest.approx(0.25238, abs=1e-5)
    assert payload["R"] == pytest.approx(0.15849, abs=1e-5)


def test_derive_params_rejects_delta_above_one():
    assert cli.main(["derive-params", "--delta", "1.5", "--dim", "1",
                     "--smoothness", "1", "--rho", "1", "--gap", "1"]) == 2


def test_derive_params_theorem2(capsys):
    code = cli.main(["derive-params", "--mode", "theorem2", "--eps", "0.01",
                     "--dim", "1", "--smoothness", "1", "--rho", "1",
                     "--gap", "1"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["r"] == pytest.approx(0.01)
    assert payload["R"] == pytest.approx(0.1)


def test_accept_known_suite(capsys):
    assert cli.main(["accept", "--suite", "descent-lemma"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS descent-lemma")


def test_accept_unknown_suite():
    assert cli.main(["accept", "--suite", "no-such-suite"]) == 2


def test_trace_dump_stdout(tmp_path, capsys):
    cfg = write_config(tmp_path, VALID_CONFIG)
    assert cli.main(["trace-dump", "--config", cfg, "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("schema_version,iteration,phase")


def test_measure_delta_exact_oracle_is_zero(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(VALID_CONFIG, seeds=[0]))
    assert cli.main(["measure-delta", "--config", cfg,
                     "--probes", "10"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["delta_hat_max"] >= 0.0


def test_measure_delta_workers(tmp_path, capsys):
    payload = {
        "problem": "mean_estimation",
        "problem_params": {"mu": [0.0, 0.0]},
        "m": 10, "n": 200, "alpha": 0.0,
        "aggregator": {"kind": "trimmed_mean", "beta": 0.0},
        "oracle_mode": "workers",
        "optimizer_source": "theorem1",
        "delta_inexact": 0.2, "delta_fail": 0.1,
        "seeds": [0], "w0": [1.0, 1.0],
    }
    cfg = write_config(tmp_path, payload)
    assert cli.main(["measure-delta", "--config", cfg,
                     "--probes", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0.0 < out["delta_hat_max"] < 0.2
