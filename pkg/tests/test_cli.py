import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest
from referencing import Registry, Resource

from phinehari import kernels
from phinehari.cli import main
from phinehari.io import read_field_csv, read_jsonl

SCHEMAS = Path(__file__).resolve().parent.parent / "docs" / "schemas"

SMALL = """
[problem]
family = {family}
dim = 2
nodes_per_axis = {n}
q = {q}
{lstar}
{lam}
a = {a}
b = {b}

[solver]
restarts = 2

[thresholds]
probe_count = 6
ascent_steps = 20
"""


def write_cfg(tmp_path, name="run.ini", family="power:1.5", n=17, q=1.2, lstar="lstar = 6",
              lam="lambda = 0.05", a="1", b="1"):
    path = tmp_path / name
    path.write_text(SMALL.format(family=family, n=n, q=q, lstar=lstar, lam=lam, a=a, b=b))
    return path


def _registry():
    resources = []
    for f in SCHEMAS.glob("*.schema.json"):
        resources.append((f.name, Resource.from_contents(json.loads(f.read_text()))))
    return Registry().with_resources(resources)


REGISTRY = _registry()


def validate(path, schema):
    sch = json.loads((SCHEMAS / f"{schema}.schema.json").read_text())
    validator = jsonschema.Draft202012Validator(sch, registry=REGISTRY)
    docs = read_jsonl(path) if str(path).endswith(".jsonl") else [json.loads(Path(path).read_text())]
    for doc in docs:
        validator.validate(doc)


@pytest.fixture(autouse=True)
def restore_threads(monkeypatch):
    monkeypatch.delenv("NEHARI_THREADS", raising=False)
    before = kernels.get_threads()
    yield
    kernels.set_threads(before)


def run(*argv):
    return main([str(a) for a in argv])


class TestCheck:
    def test_pass(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        assert run("check", "--config", cfg, "--out", tmp_path / "o", "--dump") == 0
        assert "all checks passed" in capsys.readouterr().out
        validate(tmp_path / "o" / "check.json", "check")
        header = (tmp_path / "o" / "nfunction.csv").read_text().splitlines()[0]
        assert header == "t,Phi,t_phi,quotient"

    def test_q_too_large(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, q=1.6)
        assert run("check", "--config", cfg, "--out", tmp_path / "o") == 1
        out = capsys.readouterr().out
        assert "standing hypothesis violated: q < " in out
        report = json.loads((tmp_path / "o" / "check.json").read_text())
        assert not report["ok"]
        assert [h["name"] for h in report["hypothesis"] if not h["pass"]][0].startswith("q<")

    def test_laplacian_without_critical_exponent(self, tmp_path):
        cfg = write_cfg(tmp_path, family="power:2", lstar="")
        assert run("check", "--config", cfg, "--out", tmp_path / "o") == 1
        report = json.loads((tmp_path / "o" / "check.json").read_text())
        assert report["hypothesis"] == [{"name": "ell<N", "pass": False, "detail": report["hypothesis"][0]["detail"]}]

    def test_missing_config(self, tmp_path, capsys):
        assert run("check", "--config", tmp_path / "none.ini") == 2
        assert "not found" in capsys.readouterr().err

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[problem]\nfamily = power:1.5\n")
        assert run("check", "--config", path) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["check"])
        assert exc.value.code == 2


class TestProject:
    def test_two_points(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        assert run("project", "--config", cfg, "--out", tmp_path / "o", "--dump") == 0
        out = capsys.readouterr().out
        assert "case P>0,Q>0" in out and "t_tilde" in out
        validate(tmp_path / "o" / "projection.json", "projection")
        proj = json.loads((tmp_path / "o" / "projection.json").read_text())
        assert [p["branch"] for p in proj["points"]] == ["plus", "minus"]
        header = (tmp_path / "o" / "fibering.csv").read_text().splitlines()[0]
        assert header == "t,gamma,gamma1,gamma2,m_u,m_u_prime,eta"
        assert (tmp_path / "o" / "fibering.svg").read_text().startswith("<?xml")

    def test_single_root(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, b="-1")
        assert run("project", "--config", cfg, "--out", tmp_path / "o") == 0
        proj = json.loads((tmp_path / "o" / "projection.json").read_text())
        assert [p["branch"] for p in proj["points"]] == ["plus"]
        assert proj["t_tilde"] is None
        assert "standing hypothesis violated" in capsys.readouterr().err

    def test_no_projection(self, tmp_path):
        cfg = write_cfg(tmp_path, a="-1", b="-1")
        assert run("project", "--config", cfg, "--out", tmp_path / "o") == 1
        validate(tmp_path / "o" / "projection.json", "projection")

    def test_direction_expression(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert run("project", "--config", cfg, "--out", tmp_path / "o", "--direction", "x*(1-x)*y*(1-y)") == 0

    def test_bad_direction(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert run("project", "--config", cfg, "--out", tmp_path / "o", "--direction", "import os") == 2


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("solve")
    cfg = write_cfg(tmp)
    code = main(["solve", "--config", str(cfg), "--out", str(tmp / "a"), "--dump"])
    return tmp, cfg, code


class TestSolve:
    def test_exit_and_artifacts(self, solved):
        tmp, _, code = solved
        assert code == 0
        out = tmp / "a"
        validate(out / "summary.json", "summary")
        validate(out / "thresholds.json", "thresholds")
        validate(out / "timings.json", "timings")
        for branch in ("plus", "minus"):
            validate(out / f"trace_{branch}.jsonl", "trace")
            validate(out / f"u_{branch}.json", "field_header")
            assert (out / f"fibering_{branch}.csv").exists()
        assert (out / "traces.svg").exists()

    def test_summary_content(self, solved):
        tmp, _, _ = solved
        s = json.loads((tmp / "a" / "summary.json").read_text())
        assert s["plus"]["converged"] and s["minus"]["converged"]
        assert s["plus"]["energy"] < 0 < s["minus"]["energy"]
        assert s["lambda"] == 0.05 and s["config"]["nodes_per_axis"] == 17

    def test_fields_nonnegative(self, solved):
        tmp, _, _ = solved
        u = read_field_csv(tmp / "a" / "u_minus.csv")
        assert u.values.shape == (17, 17) and u.values.min() >= 0

    def test_byte_identical_rerun(self, solved, tmp_path):
        tmp, cfg, _ = solved
        assert run("solve", "--config", cfg, "--out", tmp_path) == 0
        for name in ("summary.json", "thresholds.json", "trace_minus.jsonl", "u_minus.csv", "traces.svg"):
            assert (tmp_path / name).read_bytes() == (tmp / "a" / name).read_bytes(), name

    def test_threads_flag_keeps_results(self, solved, tmp_path):
        tmp, cfg, _ = solved
        assert run("solve", "--config", cfg, "--out", tmp_path, "--threads", 2) == 0
        assert (tmp_path / "summary.json").read_bytes() == (tmp / "a" / "summary.json").read_bytes()
        assert json.loads((tmp_path / "timings.json").read_text())["threads"] == 2

    def test_env_threads(self, solved, tmp_path, monkeypatch):
        _, cfg, _ = solved
        monkeypatch.setenv("NEHARI_THREADS", "3")
        assert run("solve", "--config", cfg, "--out", tmp_path) == 0
        assert json.loads((tmp_path / "timings.json").read_text())["threads"] == 3

    def test_flag_beats_env(self, solved, tmp_path, monkeypatch):
        _, cfg, _ = solved
        monkeypatch.setenv("NEHARI_THREADS", "3")
        assert run("solve", "--config", cfg, "--out", tmp_path, "--threads", 1) == 0
        assert json.loads((tmp_path / "timings.json").read_text())["threads"] == 1

    @pytest.mark.parametrize("env,flag", [(None, 0), ("zero", None), ("-2", None)])
    def test_bad_threads(self, solved, tmp_path, monkeypatch, env, flag):
        _, cfg, _ = solved
        if env is not None:
            monkeypatch.setenv("NEHARI_THREADS", env)
        argv = ["solve", "--config", cfg, "--out", tmp_path] + (["--threads", flag] if flag is not None else [])
        assert run(*argv) == 2

    def test_seed_override(self, solved, tmp_path):
        _, cfg, _ = solved
        assert run("solve", "--config", cfg, "--out", tmp_path, "--seed", 4) == 0
        assert json.loads((tmp_path / "summary.json").read_text())["config"]["seed"] == 4

    def test_lambda_above_estimate_warns(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, lam="lambda = 20")
        assert run("solve", "--config", cfg, "--out", tmp_path / "o") in (0, 1)
        assert "λ ≥ Λ estimate; theory silent" in capsys.readouterr().err
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["lambda_below_Lambda"] is False
        validate(tmp_path / "o" / "summary.json", "summary")

    def test_needs_single_lambda(self, tmp_path):
        cfg = write_cfg(tmp_path, lam="lambdas = 0.05 0.02")
        assert run("solve", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_infeasible(self, tmp_path):
        cfg = write_cfg(tmp_path, n=9, a="-1", b="-1")
        assert run("solve", "--config", cfg, "--out", tmp_path / "o") == 1
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["plus"]["status"] == s["minus"]["status"] == "infeasible"
        assert s["thresholds"] is None
        validate(tmp_path / "o" / "summary.json", "summary")


class TestSweep:
    def test_sweep(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, n=9, lam="lambdas = 0.01 0.04 0.02")
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o") == 0
        validate(tmp_path / "o" / "sweep.json", "sweep")
        rows = json.loads((tmp_path / "o" / "sweep.json").read_text())["rows"]
        assert [r["lambda"] for r in rows] == [0.04, 0.02, 0.01]
        assert all(r["bound_ok"] for r in rows)
        assert "norm strictly decreasing: yes" in capsys.readouterr().out
        lines = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
        assert len(lines) == 4 and lines[0].startswith("lambda,norm,")
        assert (tmp_path / "o" / "decay.svg").exists()

    def test_needs_three_lambdas(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, lam="lambda = 0.05")
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "need ≥ 3" in capsys.readouterr().err

    def test_failures_reported(self, tmp_path):
        cfg = write_cfg(tmp_path, n=9, a="-1", b="-1", lam="lambdas = 0.04 0.02 0.01")
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o") == 1
        validate(tmp_path / "o" / "sweep.json", "sweep")


class TestEntryPoint:
    def test_module_help(self):
        out = subprocess.run([sys.executable, "-m", "phinehari.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        for cmd in ("check", "project", "solve", "sweep"):
            assert cmd in out.stdout

    def test_subcommand_flags(self):
        out = subprocess.run([sys.executable, "-m", "phinehari.cli", "solve", "--help"], capture_output=True,
                             text=True)
        for flag in ("--config", "--out", "--seed", "--dump", "--threads"):
            assert flag in out.stdout
