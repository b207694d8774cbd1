import csv
import hashlib
import json
import subprocess
import sys

import pytest

from habitcontrol.cli import main
from habitcontrol.params import ModelParams

from conftest import REGIME_TUPLES


def write_config(path, prm=None, **changes):
    d = (prm or ModelParams()).to_dict()
    d.update(changes)
    path.write_text(json.dumps(d))
    return str(path)


@pytest.fixture
def cfg(tmp_path):
    return write_config(tmp_path / "default.json")


def run(*args):
    return main([str(a) for a in args])


class TestClassify:
    def test_default(self, cfg, tmp_path, capsys):
        assert run("classify", "--config", cfg, "--out", tmp_path / "o") == 0
        assert "case: Normal" in capsys.readouterr().out
        data = json.loads((tmp_path / "o" / "classify.json").read_text())
        assert data["regime"]["case"] == "Normal"
        manifest = json.loads((tmp_path / "o" / "manifest_classify.json").read_text())
        assert manifest["config_sha256"] == hashlib.sha256(open(cfg, "rb").read()).hexdigest()
        assert manifest["exit_code"] == 0

    def test_empty_budget(self, tmp_path, capsys):
        c = write_config(tmp_path / "c.json", x0=0.5)
        assert run("classify", "--config", c, "--out", tmp_path / "o") == 3
        assert "budget_nonempty" in capsys.readouterr().err

    def test_malformed(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        assert run("classify", "--config", bad, "--out", tmp_path / "o") == 2

    def test_schema(self, tmp_path):
        c = write_config(tmp_path / "c.json", bogus=1)
        assert run("classify", "--config", c, "--out", tmp_path / "o") == 2


class TestSolve:
    def test_grids_and_oracle(self, cfg, tmp_path):
        out = tmp_path / "o"
        assert run("solve", "--config", cfg, "--out", out, "--oracle", "--n-t", 11, "--n-eta", 5) == 0
        with open(out / "oracle.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert set(rows[0]) == {"t", "s", "quantity", "closed_form", "oracle", "rel_err"}
        assert max(float(r["rel_err"]) for r in rows) <= 1e-6
        with open(out / "grid_t.csv") as fh:
            last = list(csv.DictReader(fh))[-1]
        assert float(last["t"]) == 1.0 and float(last["m"]) == 0.0
        with open(out / "n_grid.csv") as fh:
            n_rows = [r for r in csv.DictReader(fh) if float(r["t"]) == 1.0]
        assert n_rows and all(float(r["N"]) == 1.0 for r in n_rows)

    def test_explosion(self, tmp_path, capsys):
        c = write_config(tmp_path / "c.json", REGIME_TUPLES["tangent"], horizon=10.0)
        assert run("solve", "--config", c, "--out", tmp_path / "o") == 4
        assert "(t, s)" in capsys.readouterr().err


class TestSimulate:
    def test_deterministic_json(self, cfg, tmp_path):
        args = ["simulate", "--config", cfg, "--paths", 300, "--steps", 50, "--seed", 9]
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        a = (tmp_path / "a" / "simulate.json").read_bytes()
        assert a == (tmp_path / "b" / "simulate.json").read_bytes()
        data = json.loads(a)
        assert data["seed"] == 9 and data["hard_violations"] == 0

    def test_subsistence_marked_degenerate(self, cfg, tmp_path):
        out = tmp_path / "o"
        assert run("simulate", "--config", cfg, "--out", out, "--paths", 20, "--steps", 20,
                   "--policy", "subsistence") == 0
        assert json.loads((out / "simulate.json").read_text())["mean_utility"] == "-inf (degenerate)"

    def test_policy_error(self, cfg, tmp_path):
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o",
                   "--policy", "perturbation:bogus=2") == 5

    def test_stored_paths(self, cfg, tmp_path):
        out = tmp_path / "o"
        assert run("simulate", "--config", cfg, "--out", out, "--paths", 10, "--steps", 10,
                   "--store-paths", 2) == 0
        assert (out / "path_0001.csv").exists()

    def test_inadmissible(self, tmp_path):
        c = write_config(tmp_path / "c.json", x0=0.5)
        assert run("simulate", "--config", c, "--out", tmp_path / "o", "--paths", 10) == 3


class TestVerify:
    def test_gate(self, tmp_path):
        c = write_config(tmp_path / "c.json", p=0.9, rho=0.0, theta0=0.002, **{"lambda": 0.05})
        assert run("verify", "--config", c, "--out", tmp_path / "o") == 3

    def test_quick_schema(self, cfg, tmp_path):
        out = tmp_path / "o"
        code = run("verify", "--config", cfg, "--out", out, "--quick")
        data = json.loads((out / "verify.json").read_text())
        assert set(data) == {"verification", "residuals", "admissibility", "quick", "passed"}
        assert code == (0 if data["passed"] else 6)
        assert data["quick"] is True
        assert set(data["residuals"]) == {"n_pde", "hjb"}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "habitcontrol", "--version"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip()
