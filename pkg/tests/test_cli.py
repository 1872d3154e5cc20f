import csv
import io
import json

import numpy as np
import pytest

from bilayer_epi.cli import main
from bilayer_epi.pipelines import (
    COMPARE_HEADER,
    ENSEMBLE_HEADER,
    SWEEP_ALPHA_HEADER,
    SWEEP_BUDGET_HEADER,
    TRAJECTORY_HEADER,
    parse_grid,
)

SMALL = ["--n", "12", "--na", "9", "--nb", "9", "--overlap", "6", "--density", "0.35"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def header(text):
    return next(csv.reader(io.StringIO(text)))


@pytest.fixture
def graph(tmp_path, capsys):
    path = tmp_path / "g.json"
    code, _, _ = run(["--seed", "7", "gen-graph", *SMALL, "--out", str(path)], capsys)
    assert code == 0
    return path


@pytest.fixture
def design(tmp_path, graph, capsys):
    path = tmp_path / "d.json"
    code, _, err = run(["design-extinction", "--graph", str(graph), "--out", str(path)], capsys)
    assert code == 0, err
    return path


def test_gen_graph_deterministic(tmp_path, capsys):
    _, a, _ = run(["gen-graph", *SMALL, "--seed", "3"], capsys)
    _, b, _ = run(["--seed", "3", "gen-graph", *SMALL], capsys)
    _, c, _ = run(["gen-graph", *SMALL, "--seed", "4"], capsys)
    assert a == b != c
    assert json.loads(a)["n"] == 12


def test_design_extinction_output(design):
    doc = json.loads(design.read_text())
    assert doc["kind"] == "extinction"
    assert doc["achieved_eigenvalue"] <= -doc["epsilon"] + 1e-6


def test_design_with_cost_file(tmp_path, graph, capsys):
    from bilayer_epi.allocate import CostModel
    from bilayer_epi.graph import load_network

    costs = tmp_path / "c.json"
    costs.write_text(CostModel.standard(load_network(graph.read_bytes())).dumps())
    code, out, _ = run(["design-extinction", "--graph", str(graph), "--costs", str(costs),
                        "--epsilon", "0.005"], capsys)
    assert code == 0 and json.loads(out)["epsilon"] == 0.005


def test_design_budget(graph, design, capsys):
    cost = json.loads(design.read_text())["total_cost"]
    code, out, _ = run(["design-budget", "--graph", str(graph), "--budget", str(2 * cost)], capsys)
    assert code == 0
    assert json.loads(out)["achieved_eigenvalue"] < 0


def test_design_budget_infeasible(graph, capsys):
    code, _, err = run(["design-budget", "--graph", str(graph), "--budget", "0.001"], capsys)
    assert code == 1 and "budget" in err


def test_sweep_alpha(graph, design, capsys):
    code, out, _ = run(["sweep-alpha", "--design", str(design), "--graph", str(graph), "--alphas", "0.8,1.0,1.2"],
                       capsys)
    assert code == 0
    assert header(out) == SWEEP_ALPHA_HEADER
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 3
    assert float(rows[0]["phi_a_max"]) <= 1e-6 < float(rows[2]["phi_a_mean"])


def test_sweep_alpha_json(graph, design, capsys):
    code, out, _ = run(["--format", "json", "sweep-alpha", "--design", str(design), "--graph", str(graph),
                        "--alphas", "1.0"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert len(doc) == 1 and set(doc[0]) == set(SWEEP_ALPHA_HEADER)


def test_sweep_budget(graph, capsys):
    code, out, _ = run(["sweep-budget", "--graph", str(graph), "--multipliers", "0.0001,0.8,1.0"], capsys)
    assert code == 0
    assert header(out) == SWEEP_BUDGET_HEADER
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["status"] == "infeasible"
    assert rows[1]["status"] == rows[2]["status"] == "optimal"


def test_empty_grid_is_usage_error(graph, design, capsys):
    code, _, err = run(["sweep-alpha", "--design", str(design), "--graph", str(graph), "--alphas", ""], capsys)
    assert code == 2 and "usage" in err


def test_missing_file(capsys):
    code, _, err = run(["simulate-mf", "--graph", "/nonexistent.json"], capsys)
    assert code == 2 and "not found" in err


def test_bad_graph_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, err = run(["simulate-mf", "--graph", str(bad)], capsys)
    assert code == 1 and err


def test_simulate_mf(graph, capsys):
    code, out, _ = run(["simulate-mf", "--graph", str(graph), "--t-end", "2", "--dt", "0.01",
                        "--sample-every", "0.5"], capsys)
    assert code == 0
    assert header(out) == TRAJECTORY_HEADER
    times = [float(r[0]) for r in list(csv.reader(io.StringIO(out)))[1:]]
    assert np.allclose(times, [0, 0.5, 1.0, 1.5, 2.0])


def test_simulate_mf_wide(graph, capsys):
    code, out, _ = run(["simulate-mf", "--graph", str(graph), "--t-end", "1", "--wide"], capsys)
    assert code == 0
    assert len(header(out)) == 1 + 2 * 12


def test_simulate_stochastic_deterministic(graph, capsys):
    argv = ["simulate-stochastic", "--graph", str(graph), "--t-end", "5", "--trials", "10",
            "--grid-points", "11", "--seed", "2"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(["--threads", "2"] + argv, capsys)
    assert header(a) == ENSEMBLE_HEADER
    assert a == b
    assert len(a.splitlines()) == 12


def test_compare(tmp_path, graph, capsys):
    svg = tmp_path / "c.svg"
    code, out, err = run(["compare", "--graph", str(graph), "--t-end", "5", "--trials", "10",
                          "--grid-points", "11", "--svg", str(svg)], capsys)
    assert code == 0
    assert header(out) == COMPARE_HEADER
    assert svg.read_text().startswith("<svg")
    summary = json.loads(err.strip().splitlines()[-1])
    assert summary["max_abs_err_a"] >= 0


def test_tolerance_profile(graph, capsys):
    code, out, _ = run(["--tol-profile", "strict", "design-extinction", "--graph", str(graph)], capsys)
    assert code == 0 and json.loads(out)["gp_status"] == "optimal"


def test_fig2_single_alpha(tmp_path, graph, capsys):
    code, _, err = run(["fig2", "--graph", str(graph), "--alphas", "1.0:1.0:0.05", "--out-dir", str(tmp_path)],
                       capsys)
    assert code == 0, err
    lines = (tmp_path / "fig2.csv").read_text().splitlines()
    assert len(lines) == 2
    assert (tmp_path / "fig2.svg").exists()


def test_fig2_deterministic(tmp_path, graph, capsys):
    for d in ("a", "b"):
        assert run(["fig2", "--graph", str(graph), "--alphas", "0.9,1.1", "--out-dir", str(tmp_path / d)],
                   capsys)[0] == 0
    assert (tmp_path / "a" / "fig2.csv").read_bytes() == (tmp_path / "b" / "fig2.csv").read_bytes()


def test_fig3_empty_grid(tmp_path, capsys):
    code, _, _ = run(["fig3", "--multipliers", "", "--out-dir", str(tmp_path)], capsys)
    assert code == 2


def test_fig3_small(tmp_path, graph, capsys):
    code, _, err = run(["fig3", "--graph", str(graph), "--multipliers", "0.7,1.0", "--out-dir", str(tmp_path)],
                       capsys)
    assert code == 0, err
    rows = list(csv.DictReader(io.StringIO((tmp_path / "fig3.csv").read_text())))
    # at 1.0 the design sits at the threshold (epsilon* = 1e-4), so decay is slow
    assert float(rows[1]["lambda_max_j11"]) <= 1e-6 < float(rows[0]["lambda_max_j11"])
    assert float(rows[0]["phi_a_mean"]) > float(rows[1]["phi_a_mean"])


def test_fig45_small(tmp_path, capsys):
    code, _, err = run(["fig45", *SMALL, "--endemic-density", "0.35", "--trials", "5", "--t-end", "5", "--grid-points", "11",
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 0, err
    for name in ("fig4.csv", "fig5.csv", "fig4.svg", "fig5.svg", "fig45_summary.json"):
        assert (tmp_path / name).exists()
    assert header((tmp_path / "fig4.csv").read_text()) == COMPARE_HEADER


def test_parse_grid():
    assert np.allclose(parse_grid("0.5:1.5:0.25"), [0.5, 0.75, 1.0, 1.25, 1.5])
    assert np.allclose(parse_grid("1,2.5"), [1, 2.5])
    assert len(parse_grid("0.5:1.5:0.05")) == 21
    with pytest.raises(ValueError):
        parse_grid("1:0:0.1")
