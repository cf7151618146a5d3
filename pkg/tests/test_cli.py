import csv
import json

import numpy as np
import pytest
from scipy.stats import norm

from baker_copula import cli, copula, modelio
from baker_copula.copula import BakerModel, ParamTensor
from baker_copula.marginals import fit_continuous


def write_data(path, data, header=None):
    header = header or [f"v{j}" for j in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(data.tolist())
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def data22(tmp_path):
    u = copula.sample_copula([[0.4, 0.1], [0.1, 0.4]], 400, seed=7)
    return write_data(tmp_path / "d.csv", norm.ppf(u))


def test_fit_writes_model(tmp_path, data22, capsys):
    out = tmp_path / "m.json"
    assert cli.main(["fit", data22, "--dims", "2,2", "--out", str(out)]) == 0
    model, raw = modelio.read_model(out)
    assert raw["fit"]["converged"] is True
    assert np.all(np.diff(raw["fit"]["loglik_trace"]) >= -1e-9)
    assert model.params.dims == (2, 2)
    assert "AIC" in capsys.readouterr().out


def test_model_round_trip_is_byte_identical(tmp_path, data22):
    out = tmp_path / "m.json"
    cli.main(["fit", data22, "--dims", "2,3", "--out", str(out)])
    model, raw = modelio.read_model(out)
    again = tmp_path / "again.json"
    modelio.write_model(again, model, raw["fit"])
    assert out.read_bytes() == again.read_bytes()


def test_fit_trivial_dims(tmp_path, data22):
    out = tmp_path / "m.json"
    assert cli.main(["fit", data22, "--dims", "1,1", "--out", str(out)]) == 0
    raw = json.loads(out.read_text())
    assert raw["weights"] == [1.0] and raw["fit"]["aic"] == 0.0


def test_malformed_row(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,4\n5,oops\n")
    assert cli.main(["fit", str(path), "--dims", "2,2", "--out", str(tmp_path / "m.json")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_ragged_row_and_missing_file(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    assert cli.main(["fit", str(path), "--dims", "2,2"]) == 2
    assert cli.main(["fit", str(tmp_path / "none.csv"), "--dims", "2,2"]) == 2


def test_nonconvergence_exit(tmp_path, data22):
    out = tmp_path / "m.json"
    assert cli.main(["fit", data22, "--dims", "3,3", "--max-iter", "2", "--out", str(out)]) == 3
    assert json.loads(out.read_text())["fit"]["converged"] is False


def test_fit_cov_out(tmp_path, data22):
    cov = tmp_path / "cov.json"
    assert cli.main(["fit", data22, "--dims", "2,2", "--out", str(tmp_path / "m.json"),
                     "--cov-out", str(cov)]) == 0
    raw = json.loads(cov.read_text())
    assert raw["dims"] == [2, 2] and len(raw["sigma"]) == 16


def test_select_table(tmp_path, data22, capsys):
    table = tmp_path / "aic.csv"
    assert cli.main(["select", data22, "--grid", "1..3x1..2", "--out", str(table)]) == 0
    rows = read_rows(table)
    assert rows[0] == ["m", "1", "2"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    assert all(len(r) == 3 for r in rows)
    assert rows[1][1] == rows[1][2]
    assert "best dims" in capsys.readouterr().out


def test_select_one_cell(tmp_path, data22):
    table = tmp_path / "aic.csv"
    assert cli.main(["select", data22, "--grid", "2x2", "--out", str(table)]) == 0
    assert len(read_rows(table)) == 2


def test_select_needs_two_columns(tmp_path):
    path = write_data(tmp_path / "d3.csv", np.random.default_rng(0).normal(size=(20, 3)))
    assert cli.main(["select", path, "--grid", "1..2x1..2"]) == 5


def test_fit_hpm(tmp_path):
    u = copula.sample_copula(copula.hpm_params("+", 0.9, 8), 1000, seed=1)
    path = write_data(tmp_path / "h.csv", u)
    out, prof = tmp_path / "h.json", tmp_path / "p.csv"
    assert cli.main(["fit-hpm", path, "--sign", "+", "--n-max", "15", "--profile",
                     "--profile-out", str(prof), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert abs(res["q"] - 0.9) < 0.1
    rows = read_rows(prof)
    assert rows[0] == ["n", "q_hat", "loglik"] and len(rows) == 16
    best = max(rows[1:], key=lambda r: float(r[2]))
    assert abs(int(best[0]) - res["n"]) <= 2


def test_fit_hpm_degenerate(tmp_path):
    path = write_data(tmp_path / "h.csv", np.random.default_rng(2).normal(size=(50, 2)))
    assert cli.main(["fit-hpm", path, "--n-max", "1", "--out", str(tmp_path / "h.json")]) == 4


def test_sample_determinism(tmp_path, data22):
    model = tmp_path / "m.json"
    cli.main(["fit", data22, "--dims", "2,2", "--out", str(model)])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["sample", str(model), "--count", "25", "--seed", "3", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(read_rows(a)) == 26
    empty = tmp_path / "e.csv"
    cli.main(["sample", str(model), "--count", "0", "--out", str(empty)])
    assert read_rows(empty) == [["x1", "x2"]]


def test_sample_bad_model(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"version\": 1, \"dims\": [2, 2], \"weights\": [1, 0, 0, 0]}")
    assert cli.main(["sample", str(bad), "--count", "3"]) == 2


@pytest.fixture
def indep_model(tmp_path):
    rng = np.random.default_rng(5)
    ms = [fit_continuous(rng.normal(size=300)) for _ in range(2)]
    path = tmp_path / "indep.json"
    modelio.write_model(path, BakerModel(ParamTensor.uniform((3, 3)), ms))
    return str(path), ms


def test_density_independence_grid(tmp_path, indep_model):
    path, ms = indep_model
    out = tmp_path / "g.csv"
    assert cli.main(["density", path, "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["x", "y", "density"]
    grid = np.array(rows[1:], dtype=float)
    assert len(grid) == 100 * 100
    ref = ms[0].pdf(grid[:, 0]) * ms[1].pdf(grid[:, 1])
    np.testing.assert_allclose(grid[:, 2], ref, atol=1e-12)
    xs, ys = np.unique(grid[:, 0]), np.unique(grid[:, 1])
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    assert abs(grid[:, 2].sum() * cell - 1.0) < 2e-2


def test_density_fixed_range_and_variance(tmp_path, data22):
    model, cov = tmp_path / "m.json", tmp_path / "c.json"
    cli.main(["fit", data22, "--dims", "2,2", "--out", str(model), "--cov-out", str(cov)])
    out = tmp_path / "g.csv"
    assert cli.main(["density", str(model), "--grid", "4x3", "--range=-2:2,-1:1",
                     "--variance", str(cov), "--out", str(out)]) == 0
    grid = np.array(read_rows(out)[1:], dtype=float)
    assert grid.shape == (12, 4)
    assert grid[:, 0].min() == -2 and grid[:, 1].max() == 1
    assert np.all(grid[:, 3] >= 0)


def test_density_dimension_checks(tmp_path):
    sim = tmp_path / "s.csv"
    cli.main(["simulate3d", "--count", "200", "--seed", "1", "--out", str(sim)])
    model = tmp_path / "m3.json"
    cli.main(["fit", str(sim), "--dims", "2,2,2", "--out", str(model)])
    assert cli.main(["density", str(model)]) == 5
    out = tmp_path / "strat.csv"
    assert cli.main(["density", str(model), "--grid", "5x5", "--stratify", "0:0.1,0.9:1",
                     "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["stratum", "x", "y", "density"] and len(rows) == 51


def test_simulate3d(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["simulate3d", "--count", "123", "--seed", "4", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["x", "y", "z"] and len(rows) == 124
    assert cli.main(["simulate3d", "--n1", "5", "--n2", "6", "--out", str(out)]) == 2


def test_fit_gaussian(tmp_path):
    rng = np.random.default_rng(8)
    indep = write_data(tmp_path / "i.csv", rng.normal(size=(2000, 2)))
    out = tmp_path / "g.json"
    assert cli.main(["fit-gaussian", indep, "--out", str(out)]) == 0
    corr = np.array(json.loads(out.read_text())["corr"])
    assert abs(corr[0, 1]) < 0.05
    x = rng.normal(size=500)
    near = write_data(tmp_path / "n.csv", np.column_stack([x, x + 1e-4 * rng.normal(size=500)]))
    cli.main(["fit-gaussian", near, "--out", str(out)])
    assert json.loads(out.read_text())["corr"][0][1] > 0.999
    exact = write_data(tmp_path / "c.csv", np.column_stack([x, 2 * x]))
    assert cli.main(["fit-gaussian", exact, "--out", str(out)]) == 2


def test_fit_gaussian_strata(tmp_path):
    sim = tmp_path / "s.csv"
    cli.main(["simulate3d", "--count", "500", "--seed", "2", "--out", str(sim)])
    out, grid = tmp_path / "g.json", tmp_path / "grid.csv"
    assert cli.main(["fit-gaussian", str(sim), "--out", str(out), "--grid", "6x6",
                     "--grid-out", str(grid)]) == 0
    strata = json.loads(out.read_text())["strata"]
    assert len({s["conditional_correlation"] for s in strata}) == 1
    assert len(read_rows(grid)) == 1 + 3 * 36
