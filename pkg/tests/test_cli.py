import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from sigmak.cli import main
from sigmak.errors import ConfigError
from sigmak.expr import Expression, parse

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write(path, data):
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def small_dirichlet(**over):
    cfg = json.loads((CONFIGS / "indefinite.json").read_text())
    cfg["h"] = 0.125
    cfg["output"] = {"report": "r.json", "csv": "f.csv"}
    cfg.update(over)
    return cfg


def test_reduce_cubic_example(capsys):
    assert main(["reduce-cubic", "--a", "1", "--b", "0", "--c", "0", "--n", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[:3] == ["s = 0", "alpha_new = 1", "gamma = 0"]


def test_reduce_cubic_violation(capsys):
    assert main(["reduce-cubic", "--a", "1", "--b", "5", "--c", "0", "--n", "3"]) == 2
    cap = capsys.readouterr()
    assert cap.out == "" and "discriminant" in cap.err


def test_verify_exit_codes(workdir):
    assert main(["verify", "--suite", "all", "--nk", "2,2", "3,3", "--count", "200", "--seed", "7",
                 "--report", "v.json"]) == 0
    rep = json.loads((workdir / "v.json").read_text())
    assert rep["passed"] and len(rep["suites"]) == 7
    assert all(r["violations"] == 0 for s in rep["suites"] for r in s["results"])
    assert main(["verify", "--suite", "sum_gii", "--nk", "2,2", "--count", "50", "--tol", "-1",
                 "--report", "bad.json"]) == 1
    assert json.loads((workdir / "bad.json").read_text())["passed"] is False


def test_bad_arguments_exit_2():
    assert main(["verify", "--suite", "bogus"]) == 2
    assert main(["verify", "--nk", "2;2"]) == 2
    assert main(["verify", "--nk", "2,3", "--count", "5"]) == 2
    assert main([]) == 2


def test_verify_report_is_deterministic(workdir):
    args = ["verify", "--suite", "ellipticity", "concavity", "--nk", "3,2", "--count", "100",
            "--seed", "3", "--no-timestamp"]
    assert main(args + ["--report", "a.json"]) == 0
    assert main(args + ["--report", "b.json"]) == 0
    assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()
    assert main(args[:-1] + ["--report", "c.json"]) == 0
    assert "timestamp" in json.loads((workdir / "c.json").read_text())


def test_solve_dirichlet_example(workdir):
    shutil.copy(CONFIGS / "indefinite.json", workdir)
    assert main(["solve-dirichlet", "--config", "indefinite.json", "--h", "0.0625"]) == 0
    rep = json.loads((workdir / "indefinite_report.json").read_text())
    assert rep["max_node_error"] <= 1e-8
    lo = rep["report"]["sigma_min"]
    assert lo[0] > 0 > lo[1]
    lines = (workdir / "indefinite_fields.csv").read_text().splitlines()
    assert lines[0] == "# sigmak-fields v1"
    rows = list(csv.DictReader(lines[1:]))
    s1 = np.array([float(r["sigma1"]) for r in rows])
    l1 = np.array([float(r["lambda1"]) for r in rows])
    l2 = np.array([float(r["lambda2"]) for r in rows])
    assert np.all(s1 > 0) and np.all(l1 * l2 < 0)


def test_solve_dirichlet_byte_identical(workdir):
    c = write(workdir / "c.json", small_dirichlet())
    assert main(["solve-dirichlet", "--config", c, "--no-timestamp"]) == 0
    first = (workdir / "r.json").read_bytes()
    assert main(["solve-dirichlet", "--config", c, "--no-timestamp"]) == 0
    assert (workdir / "r.json").read_bytes() == first


def test_solve_dirichlet_disk_with_expressions(workdir):
    cfg = small_dirichlet(domain={"type": "disk", "center": [0, 0], "radius": 1.0}, h=0.0625,
                          coefficients={"alpha": "1 + 0*x", "alpha_l": ["0.5 + 0.1*sin(x)*cos(y)"]},
                          boundary="exp(x)*cos(y)/8 + pow(x, 2)/2 + y**2/2")
    cfg.pop("exact")
    assert main(["solve-dirichlet", "--config", write(workdir / "c.json", cfg)]) == 0
    rep = json.loads((workdir / "r.json").read_text())
    assert rep["report"]["converged"]


def test_failed_solve_writes_report(workdir):
    cfg = small_dirichlet(solver={"max_iter": 1, "homotopy_steps": 1})
    assert main(["solve-dirichlet", "--config", write(workdir / "c.json", cfg)]) == 1
    rep = json.loads((workdir / "r.json").read_text())
    assert rep["report"]["converged"] is False and rep["report"]["message"]


def test_malformed_json_reports_line(workdir, capsys):
    c = write(workdir / "c.json", '{\n  "n": 2,\n  "k": 2\n  "h": 0.1\n}')
    assert main(["solve-dirichlet", "--config", c]) == 2
    assert "line 4" in capsys.readouterr().err
    assert not (workdir / "r.json").exists()


@pytest.mark.parametrize("change,field", [
    ({"k": 3}, "k"),
    ({"h": "coarse"}, "h"),
    ({"h": 0.3}, "domain"),
    ({"boundary": "__import__('os')"}, "boundary"),
    ({"coefficients": {"alpha": "x.real"}}, "coefficients.alpha"),
    ({"coefficients": {"alpha_l": [1, 2]}}, "k-1"),
    ({"solver": {"tolerance": 1}}, "solver"),
    ({"domain": {"type": "annulus"}}, "domain.type"),
])
def test_config_errors_name_the_field(workdir, capsys, change, field):
    cfg = small_dirichlet(**change)
    assert main(["solve-dirichlet", "--config", write(workdir / "c.json", cfg)]) == 2
    assert field in capsys.readouterr().err
    assert not (workdir / "r.json").exists()


def test_missing_config_file(workdir):
    assert main(["solve-dirichlet", "--config", "nowhere.json"]) == 2


def test_solve_sphere(workdir):
    shutil.copy(CONFIGS / "sphere_constant.json", workdir)
    assert main(["solve-sphere", "--config", "sphere_constant.json", "--no-timestamp"]) == 0
    rep = json.loads((workdir / "sphere_report.json").read_text())
    assert rep["max_deviation_from_constant"] <= 1e-8
    assert rep["report"]["extra"]["orthogonality_residual"] <= 1e-10
    assert (workdir / "sphere_fields.csv").read_text().startswith("# sigmak-fields v1\ntheta,u,")


def test_solve_sphere_theta_coefficients(workdir):
    cfg = {"n": 2, "k": 2, "nodes": 33, "initial": "1 + 0.1*cos(2*theta)",
           "coefficients": {"alpha": 1, "alpha_l": ["1 + 0.5*cos(theta)**2"]},
           "output": {"report": "s.json"}}
    assert main(["solve-sphere", "--config", write(workdir / "c.json", cfg)]) == 0
    assert main(["solve-sphere", "--config", write(workdir / "c.json", cfg), "--nodes", "3"]) == 2
    cfg["coefficients"]["alpha"] = "x"
    assert main(["solve-sphere", "--config", write(workdir / "c.json", cfg)]) == 2


def test_sweep(workdir, capsys):
    cfg = json.loads((CONFIGS / "sweep_degenerate.json").read_text())
    cfg["nodes"] = 33
    assert main(["sweep-degenerate", "--config", write(workdir / "c.json", cfg), "--no-timestamp"]) == 0
    rep = json.loads((workdir / "sweep_report.json").read_text())
    assert len(rep["rows"]) == 6 and rep["sup_H_ratio"] <= 2
    assert capsys.readouterr().out.count("eps=") == 6
    cfg["eps"] = []
    assert main(["sweep-degenerate", "--config", write(workdir / "c.json", cfg)]) == 2


def test_expression_evaluation():
    e = Expression("sin(x) + pow(y, 2) - abs(-x) + exp(0) * pi")
    x, y = np.array([0.5, 1.0]), np.array([2.0, 3.0])
    assert np.allclose(e(x, y), np.sin(x) + y**2 - x + np.pi)
    assert parse("2*3 - 1") == 5.0
    assert parse(2) == 2.0
    assert not isinstance(parse("x + 1"), float)
    assert Expression("theta", ("theta",))(np.zeros(3)).shape == (3,)


@pytest.mark.parametrize("src", [
    "__import__('os').system('true')", "x.real", "[1, 2]", "lambda: 1", "open('f')",
    "sin(x, y)", "pow(x)", "True", "'a'", "x if y else 1", "z", "x ==", "sin(x=1)",
])
def test_expression_rejects(src):
    with pytest.raises(ConfigError):
        Expression(src)
