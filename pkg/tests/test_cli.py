import csv
import json

import numpy as np
import pytest

from maxreg.cli import main, parse_vector
from maxreg import make_triple


def write(tmp_path, name, desc):
    f = tmp_path / name
    f.write_text(json.dumps(desc))
    return str(f)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


SCALAR_AFFINE = {"kind": "scalar", "path": {"kind": "affine", "params": {"c0": 1, "c1": 1}},
                 "grid_points": 513}
CONSTANT_FEM = {"kind": "elliptic", "nodes": 12, "path": {"kind": "constant"}, "grid_points": 9}
LOWER_ORDER = {"kind": "lower_order", "nodes": 20, "grid_points": 65,
               "m_path": {"kind": "random", "params": {"low": -2, "high": 4}, "seed": 3},
               "b_path": {"kind": "constant"}}


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main(list(argv) + ["--out", str(out)])
    return code, out


def test_analyze_constant(tmp_path):
    code, out = run(tmp_path, "analyze", "--problem", write(tmp_path, "p.json", CONSTANT_FEM))
    assert code == 0
    assert all(float(r["seminorm"]) == 0.0 for r in read_csv(out / "seminorms.csv"))
    assert len(read_csv(out / "subdivision.csv")) == 1
    assert (out / "manifest.json").exists()


def test_analyze_jump(tmp_path):
    desc = {"kind": "elliptic", "nodes": 12, "path": {"kind": "piecewise_jump"}, "grid_points": 65}
    code, out = run(tmp_path, "analyze", "--problem", write(tmp_path, "p.json", desc), "--eps", "0.1")
    assert code == 0
    assert 0.5 in [float(r["t"]) for r in read_csv(out / "breakpoints.csv")]


def test_analyze_identity_path_seminorm(tmp_path):
    desc = {"kind": "scalar", "path": {"kind": "affine", "params": {"c0": 0, "c1": 1}},
            "grid_points": 33}
    code, out = run(tmp_path, "analyze", "--problem", write(tmp_path, "p.json", desc),
                    "--alpha", "0.5")
    # a(0) = 0 is not coercive: hypothesis failure, seminorm still reported.
    assert code == 2
    assert float(read_csv(out / "seminorms.csv")[0]["seminorm"]) == pytest.approx(1.0, abs=1e-4)
    assert json.loads((out / "hypotheses.json").read_text())["coercive"] is False


def test_solve_scalar_and_reference(tmp_path):
    prob = write(tmp_path, "p.json", SCALAR_AFFINE)
    code = main(["solve", "--problem", prob, "--out", str(tmp_path / "n"), "--dt", str(1 / 512)])
    assert code == 0
    rows = read_csv(tmp_path / "n" / "trajectory.csv")
    assert float(rows[-1]["u_1"]) == pytest.approx(np.exp(-1.5), abs=1e-6)
    norms = json.loads((tmp_path / "n" / "norms.json").read_text())
    assert set(norms) >= {"L2H", "L2V", "LinfV", "H1H", "AuL2H"}
    code = main(["solve", "--problem", prob, "--out", str(tmp_path / "r"), "--dt", str(1 / 64),
                 "--method", "reference"])
    assert code == 0
    ref = read_csv(tmp_path / "r" / "trajectory.csv")
    assert float(ref[-1]["u_1"]) == pytest.approx(np.exp(-1.5), abs=(1 / 64) ** 2)


def test_solve_gamma0_vs_neumann_rejection(tmp_path):
    prob = write(tmp_path, "p.json", LOWER_ORDER)
    assert main(["solve", "--problem", prob, "--out", str(tmp_path / "g"), "--method", "gamma0",
                 "--dt", str(1 / 64)]) == 0
    assert main(["solve", "--problem", prob, "--out", str(tmp_path / "n"), "--method", "neumann",
                 "--dt", str(1 / 64)]) == 3
    manifest = json.loads((tmp_path / "n" / "manifest.json").read_text())
    assert "too rough" in manifest["rejection"]


def test_verify_symmetric(tmp_path):
    desc = {"kind": "elliptic", "nodes": 12, "path": {"kind": "affine"}, "grid_points": 9}
    code, out = run(tmp_path, "verify", "--problem", write(tmp_path, "p.json", desc),
                    "--suite", "kato")
    assert code == 0
    rows = {r["name"]: r for r in read_csv(out / "reports.csv")}
    assert float(rows["kato_C1_vs_sqrt_delta"]["measured"]) <= 1e-6
    assert float(rows["kato_C2_vs_sqrt_M"]["measured"]) <= 1e-6


def test_verify_quadratic_bound(tmp_path):
    from maxreg import load_problem, verify_hypotheses
    desc = {"kind": "elliptic", "nodes": 12, "path": {"kind": "affine"}, "grid_points": 9}
    prob = write(tmp_path, "p.json", desc)
    code, out = run(tmp_path, "verify", "--problem", prob, "--suite", "quadratic")
    assert code == 0
    row = read_csv(out / "reports.csv")[0]
    h = verify_hypotheses(load_problem(prob).path)
    assert float(row["bound"]) == pytest.approx(h.M / (2 * h.delta), rel=1e-6)


def test_verify_all_constant(tmp_path):
    code, out = run(tmp_path, "verify", "--problem", write(tmp_path, "p.json", CONSTANT_FEM))
    assert code == 0
    rows = read_csv(out / "reports.csv")
    assert rows and all(r["pass"] == "True" for r in rows)


def test_compare_orders(tmp_path):
    prob = write(tmp_path, "p.json", SCALAR_AFFINE)
    code, out = run(tmp_path, "compare", "--problem", prob, "--dt", "0.0625")
    assert code == 0
    rows = read_csv(out / "compare.csv")
    assert float(rows[-1]["order"]) >= 1.8
    data = np.loadtxt(out / "compare.dat")
    assert data.shape == (3, 2)


def test_compare_autonomous_floor(tmp_path):
    desc = {"kind": "scalar", "path": {"kind": "constant"}, "grid_points": 5}
    code, out = run(tmp_path, "compare", "--problem", write(tmp_path, "p.json", desc), "--dt", "0.0625")
    assert code == 0
    assert max(float(r["l2h_discrepancy"]) for r in read_csv(out / "compare.csv")) < 1e-10


def test_compare_rough_surrogate(tmp_path):
    desc = {"kind": "elliptic", "nodes": 20, "path": {"kind": "fourier_h"}, "grid_points": 129}
    code, out = run(tmp_path, "compare", "--problem", write(tmp_path, "p.json", desc), "--dt", "0.0625")
    assert code == 0
    d = [float(r["l2h_discrepancy"]) for r in read_csv(out / "compare.csv")]
    assert all(np.isfinite(d)) and d[-1] <= d[0]


def test_determinism(tmp_path):
    prob = write(tmp_path, "p.json", CONSTANT_FEM)
    for name in ("a", "b"):
        assert main(["solve", "--problem", prob, "--out", str(tmp_path / name), "--u0", "random",
                     "--f", "mode:1", "--seed", "5", "--dt", "0.125"]) == 0
    for f in ("trajectory.csv", "norms.json", "diagnostics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop("wall_clock"), mb.pop("wall_clock"), ma.pop("out"), mb.pop("out")
    assert ma == mb and ma["seed"] == 5


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["analyze", "--problem", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "bad.json:1:" in capsys.readouterr().err
    prob = write(tmp_path, "p.json", CONSTANT_FEM)
    assert main(["solve", "--problem", prob, "--out", str(tmp_path / "o"), "--u0", "mode:99"]) == 1
    assert main(["solve", "--problem", prob, "--out", str(tmp_path / "o"), "--dt", "-1"]) == 1


def test_thread_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXREG_THREADS", "1")
    code, _ = run(tmp_path, "analyze", "--problem", write(tmp_path, "p.json", CONSTANT_FEM))
    assert code == 0
    monkeypatch.setenv("MAXREG_THREADS", "many")
    code, _ = run(tmp_path, "analyze", "--problem", write(tmp_path, "p.json", CONSTANT_FEM))
    assert code == 1


def test_parse_vector_grammar():
    tri = make_triple(np.eye(3), np.diag([1.0, 2.0, 3.0]))
    assert np.array_equal(parse_vector("ones", tri), np.ones(3))
    assert np.array_equal(parse_vector("zeros", tri), np.zeros(3))
    assert np.array_equal(parse_vector("const:2.5", tri), np.full(3, 2.5))
    assert np.allclose(parse_vector("mode:1", tri), tri.eigenvector(1))
    assert np.array_equal(parse_vector("random", tri, 3), parse_vector("random", tri, 3))
    with pytest.raises(ValueError):
        parse_vector("const:x", tri)
    with pytest.raises(ValueError):
        parse_vector("bogus", tri)
