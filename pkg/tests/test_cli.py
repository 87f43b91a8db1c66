import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sgpwgan import cli
from sgpwgan.export import read_csv

ROOT = Path(__file__).resolve().parents[1]


def run(*args):
    return cli.main([str(a) for a in args])


def _snapshot(path):
    return {p: p.read_bytes() for p in sorted(Path(path).rglob("*")) if p.is_file()}


def test_analyze_dirac(tmp_path):
    assert run("analyze", "--system", "dirac", "--rho", 1, "--mass", "const:1", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "analyze.json").read_text())
    ev = np.array([complex(*z) for z in res["spectral"]["eigenvalues"]])
    assert np.allclose(ev, [-0.5 + 0.8660254037844386j, -0.5 - 0.8660254037844386j], atol=1e-6)
    assert res["spectral"]["verdict"] == "stable" and res["projected"]["verdict"] == "stable"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["files"] == ["analyze.json"] and man["config"]["rho"] == 1.0 and man["config"]["seed"] == 0


def test_portrait_quadratic_dirac(tmp_path):
    assert run("portrait", "--system", "quadratic-dirac", "--rho", 0.375, "--box", "-4,2,-2,2",
               "--out", tmp_path) == 0
    res = json.loads((tmp_path / "portrait.json").read_text())
    lines = [np.array(l) for k in ("psi_dot", "theta_dot") for l in res["nullclines"][k]]
    xs = [l[:, 0].mean() for l in lines if np.ptp(l[:, 0]) < 0.2 and np.ptp(l[:, 1]) > 0.2]
    assert any(abs(x + 2) < 0.15 for x in xs) and any(abs(x) < 0.15 for x in xs)
    assert (tmp_path / "portrait.svg").read_text().count("nullcline-") >= 2


def test_integrate_and_check(tmp_path):
    assert run("integrate", "--system", "dirac", "--x0", "1,1", "--target", "0,0", "--out", tmp_path / "i") == 0
    header, rows = read_csv(tmp_path / "i" / "trajectory.csv")
    assert header == ["t", "psi", "theta"] and np.linalg.norm(rows[-1, 1:]) <= 1e-4
    assert run("check-assumptions", "--system", "quadratic", "--equilibrium", "0,1", "--mc-n", 2000,
               "--out", tmp_path / "c") == 0
    rep = json.loads((tmp_path / "c" / "assumptions.json").read_text())
    assert rep["checks"]["A6b"]["verdict"] == "pass"


@pytest.mark.parametrize("method", ["gd", "gd-mc"])
def test_integrate_gd_methods(tmp_path, method):
    assert run("integrate", "--system", "dirac", "--method", method, "--lr", 0.01, "--steps", 50,
               "--mc-n", 4, "--out", tmp_path) == 0
    _, rows = read_csv(tmp_path / "trajectory.csv")
    assert rows.shape == (51, 3)


def test_empty_config_exit_2_no_files(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{}")
    out = tmp_path / "out"
    assert run("run", "--config", cfg, "--out", out) == 2
    assert not out.exists()
    err = capsys.readouterr().err.strip()
    assert err.startswith("sgpwgan: error:") and "\n" not in err


@pytest.mark.parametrize("args", [
    ["analyze", "--system", "bogus"],
    ["analyze", "--system", "dirac", "--rho", "x"],
    ["portrait", "--system", "dirac", "--resolution", "3"],
    ["train2d", "--penalty-kind", "wgan"],
])
def test_validation_errors_exit_2(tmp_path, args):
    assert run(*args, "--out", tmp_path / "o") == 2


def test_malformed_json_and_unwritable(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("run", "--config", bad) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("analyze", "--system", "dirac", "--out", blocker / "sub") == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    from sgpwgan.errors import NumericalFailure

    def boom(cfg, out):
        raise NumericalFailure("non-finite drift", where=np.array([1.0, 2.0]))

    monkeypatch.setitem(cli.HANDLERS, "analyze", boom)
    assert run("analyze", "--system", "dirac", "--out", tmp_path) == 3


def test_run_config_flags_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "analyze", "system": "dirac", "rho": 2.0, "out": str(tmp_path / "a")}))
    assert run("run", "--config", cfg, "--seed", 5) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config"]["rho"] == 2.0 and man["config"]["seed"] == 5


def test_manifest_rerun_is_byte_identical(tmp_path):
    assert run("analyze", "--system", "quadratic", "--mc-n", 5000, "--seed", 3, "--out", tmp_path / "a") == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    cfg = dict(man["config"], out=str(tmp_path / "b"))
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert run("run", "--config", tmp_path / "cfg.json") == 0
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    for (pa, da), (pb, db) in zip(a.items(), b.items()):
        if pa.name == "manifest.json":
            continue
        assert da == db, pa.name


def test_train2d_small(tmp_path):
    args = ["train2d", "--iters", 4, "--log-every", 2, "--batch", 16, "--checkpoint-every", 2,
            "--svg-every", 4, "--out", tmp_path]
    assert run(*args) == 0
    files = json.loads((tmp_path / "manifest.json").read_text())["files"]
    assert "train.csv" in files and "checkpoint_0000004.bin" in files and "samples_0000004.svg" in files


def test_train2d_seeds_with_workers(tmp_path):
    env = dict(os.environ, SGPWGAN_WORKERS="2")
    cmd = [sys.executable, "-m", "sgpwgan", "train2d", "--iters", "2", "--log-every", "1", "--batch", "8",
           "--seeds", "0,1", "--out", str(tmp_path)]
    assert subprocess.run(cmd, env=env, capture_output=True).returncode == 0
    a = (tmp_path / "seed_0" / "train.csv").read_bytes()
    assert a != (tmp_path / "seed_1" / "train.csv").read_bytes()
    cmd[-1] = str(tmp_path / "seq")
    env["SGPWGAN_WORKERS"] = "1"
    assert subprocess.run(cmd, env=env, capture_output=True).returncode == 0
    assert (tmp_path / "seq" / "seed_0" / "train.csv").read_bytes() == a


def test_no_writes_outside_out(tmp_path):
    work = tmp_path / "cwd"
    work.mkdir()
    cmd = [sys.executable, "-m", "sgpwgan", "portrait", "--system", "dirac", "--out", "o"]
    assert subprocess.run(cmd, cwd=work, capture_output=True).returncode == 0
    assert sorted(p.name for p in work.iterdir()) == ["o"]


def test_schema_copies_identical():
    pkg = ROOT / "src" / "sgpwgan" / "config.schema.json"
    assert pkg.read_bytes() == (ROOT / "docs" / "config.schema.json").read_bytes()
    assert cli.load_schema()["$schema"].startswith("http://json-schema.org/draft-07")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        run("--version")
    assert info.value.code == 0 and "sgpwgan" in capsys.readouterr().out
