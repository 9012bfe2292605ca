from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from volterra_markov.cli import COMMANDS, OUT_ENV, run

EXP_KERNEL = json.dumps({"kind": "exponential", "c": 2.0, "rate": 0.5})
EXP_MODEL = json.dumps({"x": 0.3, "lam": 0.5, "b0": 1.0, "beta": -1.0})
FRAC_KERNEL = json.dumps({"kind": "fractional", "H": 0.25})


def _rows(path):
    return list(csv.reader(path.read_text().splitlines()))


def test_defect_sweep_exponential_consistent(tmp_path):
    code = run(["defect-sweep", "--kernel", EXP_KERNEL, "--model", EXP_MODEL, "--out", str(tmp_path), "--expect-consistent"])
    assert code == 0
    rows = _rows(tmp_path / "defects.csv")
    assert rows[0] == ["kernel", "lambda", "b0", "beta", "t", "T", "defect", "verdict"]
    assert len(rows) == 28
    assert {r[-1] for r in rows[1:]} == {"consistent"}


def test_defect_sweep_fractional_violated(tmp_path):
    args = ["defect-sweep", "--kernel", FRAC_KERNEL, "--model", '{"x": 0.3, "b0": 1.0}', "--out", str(tmp_path)]
    assert run(args + ["--steps-per-unit", "200"]) == 0
    assert run(args + ["--steps-per-unit", "200", "--expect-consistent"]) == 2


def test_lemma31_certificate(tmp_path):
    assert run(["lemma31", "--H", "0.25", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "certificate.txt").read_text()
    margin = float(text.split("margin = ")[1].split()[0])
    assert margin > 0.01


def test_lemma31_brownian_fails(tmp_path, capsys):
    assert run(["lemma31", "--H", "0.5", "--out", str(tmp_path)]) == 1
    assert "search exhausted" in (tmp_path / "certificate.txt").read_text()
    assert "best margin" in capsys.readouterr().err


def test_doob(tmp_path):
    assert run(["doob", "--H", "0.5", "--triple", "1,2,3", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "doob.csv")
    assert rows[0] == ["H", "s", "t", "u", "defect"]
    assert abs(float(rows[1][-1])) <= 1e-10


def test_resolved_config_is_echoed(tmp_path):
    run(["doob", "--H", "0.75", "--out", str(tmp_path)])
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["command"] == "doob"
    assert cfg["H"] == 0.75
    assert cfg["triple"] == [1.0, 2.0, 3.0]


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"H": 0.75, "triple": [1, 2, 4]}))
    out = tmp_path / "out"
    assert run(["doob", "--config", str(conf), "--H", "0.25", "--out", str(out)]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["H"] == 0.25
    assert cfg["triple"] == [1.0, 2.0, 4.0]


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"H": 0.75, "hurst": 0.3}))
    assert run(["doob", "--config", str(conf), "--out", str(tmp_path)]) == 1
    assert "hurst" in capsys.readouterr().err


def test_malformed_config(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text("{not json")
    assert run(["doob", "--config", str(conf), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["doob", "--hurst", "0.3"],
        ["doob", "--tri", "1,2,3"],
        ["no-such-command"],
        ["doob", "--H", "abc"],
        ["kernel-info", "--kernel", '{"kind": "fractional", "H": 0.25, "bogus": 1}'],
    ],
)
def test_usage_errors_exit_one(argv, tmp_path):
    assert run(argv + ["--out", str(tmp_path)]) == 1


def test_environment_output_directory(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv(OUT_ENV, str(target))
    assert run(["doob"]) == 0
    assert (target / "doob.csv").exists()


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_every_flag(command, capsys):
    with pytest.raises(SystemExit) as info:
        run([command, "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for key in COMMANDS[command]:
        assert "--" + key.replace("_", "-") in text
    for flag in ("--config", "--out", "--threads"):
        assert flag in text


def test_kernel_info(tmp_path):
    assert run(["kernel-info", "--kernel", '{"kind": "log_modulated", "H": 0.3}', "--out", str(tmp_path)]) == 0
    info = json.loads((tmp_path / "kernel_info.json").read_text())
    assert info["limit_kernel"]["kind"] == "fractional"
    assert len(_rows(tmp_path / "kernel_values.csv")) == 4


def test_kernel_info_flat_kernel(tmp_path):
    assert run(["kernel-info", "--kernel", '{"kind": "flat"}', "--out", str(tmp_path)]) == 0
    assert _rows(tmp_path / "lambda_n.csv")[-1] == ["1000", "undefined"]
    assert "unsupported" in json.loads((tmp_path / "kernel_info.json").read_text())["limit_kernel"]


def test_resolvent_csv(tmp_path):
    assert run(["resolvent", "--kernel", EXP_KERNEL, "--N", "16", "--out", str(tmp_path)]) == 0
    raw = (tmp_path / "resolvent.csv").read_bytes()
    assert b"\r" not in raw
    rows = _rows(tmp_path / "resolvent.csv")
    assert rows[0] == ["t", "EK", "RK", "E1", "E1bar"]
    assert len(rows) == 18


def test_moment_check(tmp_path):
    model = json.dumps({"x": 1.0, "b0": 1.0, "beta": -1.0, "diffusion": {"kind": "sqrt", "sigma0": 0.3}})
    kernel = json.dumps({"kind": "fractional", "H": 0.25, "scale": 1.1033})
    argv = ["moment-check", "--kernel", kernel, "--model", model, "--N", "100", "--n-paths", "20000", "--seed", "3"]
    assert run(argv + ["--out", str(tmp_path), "--expect-consistent"]) == 0
    rows = _rows(tmp_path / "moments.csv")
    assert [r[0] for r in rows[1:]] == ["mean", "second"]
    assert {r[-1] for r in rows[1:]} == {"consistent"}


def test_clt_check(tmp_path):
    assert run(["clt-check", "--n-paths", "4000", "--steps", "100", "--out", str(tmp_path), "--expect-consistent"]) == 0
    assert _rows(tmp_path / "clt.csv")[0][0] == "kind"


def test_simulate_is_reproducible_and_feeds_cond_prob(tmp_path):
    model = json.dumps({"x": 0.0, "diffusion": {"kind": "constant", "sigma0": 1.0}})
    argv = ["simulate", "--kernel", FRAC_KERNEL, "--model", model, "--N", "8", "--n-paths", "3000", "--seed", "5", "--csv", "true"]
    assert run(argv + ["--out", str(tmp_path / "a")]) == 0
    assert run(argv + ["--out", str(tmp_path / "b")]) == 0
    for name in ("ensemble.svee", "ensemble.csv", "ensemble.svee.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ens = str(tmp_path / "a" / "ensemble.svee")
    out = tmp_path / "c"
    assert run(["cond-prob", "--ensemble", ens, "--conditioning", "4:0:0.3", "--target", "8:0:100", "--out", str(out)]) == 0
    p, half, n_eff = _rows(out / "cond_prob.csv")[1]
    assert 0.0 < float(p) < 1.0 and float(half) > 0.0 and int(n_eff) >= 200
    # too few paths in a narrow bin
    assert run(["cond-prob", "--ensemble", ens, "--conditioning", "4:5:0.01", "--target", "8:0:1", "--out", str(out)]) == 1


def test_solver_overflow_reported(tmp_path):
    args = ["defect-sweep", "--functional", "linear", "--kernel", '{"kind": "log_modulated", "H": 0.3}', "--sigma0", "1"]
    assert run(args + ["--steps-per-unit", "500", "--out", str(tmp_path)]) == 1


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "volterra_markov.cli", "doob", "--H", "0.5", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert abs(float(proc.stdout.strip())) <= 1e-10
