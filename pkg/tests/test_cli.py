import json
import subprocess
import sys

import numpy as np
import pytest

from sparse_aipw.cli import main, read_table, studentize
from sparse_aipw.simulate import gen_covariates, gen_outcome_m1


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def m1_csv(tmp_path):
    seed = (3, 1)
    x = gen_covariates(800, 50, seed)
    y = gen_outcome_m1(x, seed)
    rows = [list(xi) + [yi] for xi, yi in zip(x, y)]
    return write_csv(tmp_path / "m1.csv", [f"x{j + 1}" for j in range(50)] + ["y"], rows)


def test_missing_encodings_parse_identically(tmp_path):
    a = write_csv(tmp_path / "a.csv", ["x", "y"], [[1, 2], [2, ""], [3, 4]])
    b = write_csv(tmp_path / "b.csv", ["x", "y"], [[1, 2], [2, "NA"], [3, 4]])
    xa, ya, na = read_table(a, "y")
    xb, yb, nb = read_table(b, "y")
    assert np.array_equal(xa, xb) and na == nb == ["x"]
    np.testing.assert_array_equal(ya, yb)
    assert np.isnan(ya[1])


def test_non_numeric_cell_reports_location(tmp_path, capsys):
    bad = write_csv(tmp_path / "bad.csv", ["a", "y"], [[1, 2], ["oops", 3]])
    assert main(["estimate", "--input", str(bad), "--response-col", "y"]) == 3
    err = capsys.readouterr().err
    assert "row 3" in err and "'a'" in err


def test_all_missing_response_is_data_error(tmp_path):
    f = write_csv(tmp_path / "m.csv", ["a", "y"], [[1, ""], [2, "NA"]])
    assert main(["estimate", "--input", str(f), "--response-col", "y"]) == 3


def test_unknown_column_and_file(tmp_path):
    f = write_csv(tmp_path / "m.csv", ["a", "y"], [[1, 2]])
    assert main(["select", "--input", str(f), "--response-col", "z"]) == 3
    assert main(["select", "--input", str(tmp_path / "none.csv"), "--response-col", "y"]) == 3


def test_usage_errors():
    assert main(["simulate", "--designs", "C9", "--seed", "1"]) == 2
    assert main(["simulate", "--designs", "C1"]) == 2  # seed is mandatory
    assert main(["bogus"]) == 2
    assert main(["simulate", "--seed", "1", "--lambda2", "-3"]) == 2


def test_studentize():
    x = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    y = np.array([1.0, np.nan, 3.0])
    xs, ys = studentize(x, y)
    np.testing.assert_allclose(xs[:, 0], [-1, 0, 1])
    assert np.all(xs[:, 1] == 0)
    np.testing.assert_allclose(ys[[0, 2]], [-np.sqrt(0.5), np.sqrt(0.5)])
    assert np.isnan(ys[1])


def test_estimate_fully_observed_is_mean(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 3))
    y = rng.standard_normal(40)
    f = write_csv(tmp_path / "full.csv", ["a", "b", "c", "y"], np.column_stack([x, y]).tolist())
    out = tmp_path / "r.json"
    assert main(["estimate", "--input", str(f), "--response-col", "y", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert abs(rep["theta_hat"] - y.mean()) <= 1e-10
    assert rep["response_rate"] == 1.0


def test_estimate_with_missing(tmp_path):
    seed = (4, 0)
    x = gen_covariates(300, 8, seed)
    y = gen_outcome_m1(x, seed)
    d = np.random.default_rng(1).uniform(size=300) < 1 / (1 + np.exp(-3 * x[:, 0]))
    rows = [list(xi) + [yi if di else "NA"] for xi, yi, di in zip(x, y, d)]
    f = write_csv(tmp_path / "mis.csv", [f"v{j}" for j in range(8)] + ["y"], rows)
    out = tmp_path / "r.json"
    assert main(["estimate", "--input", str(f), "--response-col", "y", "--studentize",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert set(rep) >= {"theta_hat", "sigma2_hat", "ci95", "response_rate",
                        "selected_covariates", "propensity_nonzero"}
    assert rep["ci95"][0] < rep["theta_hat"] < rep["ci95"][1]
    assert {"v0", "v1", "v2", "v3"} <= set(rep["selected_covariates"])


def test_select_m1_one_indexed(m1_csv, tmp_path):
    out = tmp_path / "s.json"
    assert main(["select", "--input", str(m1_csv), "--response-col", "y", "--seed", "3",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["active"] == [1, 2, 3, 4]
    assert rep["active_names"] == ["x1", "x2", "x3", "x4"]
    assert len(rep["gradient_norms"]) == 50


def test_select_no_signal(tmp_path):
    rng = np.random.default_rng(2)
    rows = [list(r) + [0.0] for r in rng.uniform(size=(30, 5))]
    f = write_csv(tmp_path / "z.csv", [f"a{j}" for j in range(5)] + ["y"], rows)
    out = tmp_path / "s.json"
    assert main(["select", "--input", str(f), "--response-col", "y", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["no_signal"] and rep["active"] == [] and len(rep["gradient_norms"]) == 5


def test_simulate_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"t{k}.csv"
        assert main(["simulate", "--designs", "C1", "--sizes", "I", "--M", "10",
                     "--estimators", "CC", "--seed", "7", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert lines[0].startswith("design,size,estimator") and len(lines) == 2


def test_simulate_json_round_trip(tmp_path):
    out = tmp_path / "t.json"
    assert main(["simulate", "--designs", "C1,C3", "--sizes", "I", "--M", "3",
                 "--estimators", "CC", "PS", "--seed", "1", "--format", "json",
                 "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert len(payload["cells"]) == 4
    assert payload["replicates"] == 3


def test_console_entry_point(tmp_path):
    out = tmp_path / "t.md"
    r = subprocess.run([sys.executable, "-m", "sparse_aipw.cli", "simulate", "--designs", "C2",
                        "--sizes", "II", "--M", "2", "--estimators", "CC", "--seed", "3",
                        "--format", "md", "--out", str(out)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert out.read_text().startswith("| design | size | estimator |")
