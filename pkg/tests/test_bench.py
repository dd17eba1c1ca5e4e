import dataclasses
import json

import numpy as np
import pytest

from sicnm.bench import (
    BenchReport,
    ExperimentSpec,
    PerturbSpec,
    cell_label,
    emit_trace_csv,
    format_table,
    joint_mean_iterations,
    perturbed_start,
    run_comparison,
    run_limit_test,
    write_outputs,
)
from sicnm.caseio import write_case_m
from sicnm.pfcore import initial_state, split_state
from sicnm.solvers import CONVERGED, DIVERGED, MAX_ITER, SINGULAR

from conftest import case_path


def spec9(**kw):
    base = dict(cases=(str(case_path("case9")),), methods=("m1", "m8-rodas3d"), seed=7)
    base.update(kw)
    return ExperimentSpec(**base)


def test_comparison_is_deterministic_apart_from_time():
    a = run_comparison(spec9()).to_dict(include_wall_time=False)
    b = run_comparison(spec9()).to_dict(include_wall_time=False)
    assert a == b
    assert {c["status"] for c in a["cells"]} == {CONVERGED}
    assert "wall_time" not in json.dumps(a)


def test_limit_test_is_deterministic_and_thread_independent(monkeypatch):
    spec = spec9(perturb=PerturbSpec(runs=6))
    monkeypatch.setenv("SICNM_THREADS", "1")
    a = run_limit_test(spec).to_dict(include_wall_time=False)
    monkeypatch.setenv("SICNM_THREADS", "4")
    b = run_limit_test(spec).to_dict(include_wall_time=False)
    assert a == b
    assert len(a["limit"]) == 2 and all(len(s["runs"]) == 6 for s in a["limit"])


def test_perturbation_draws(prob14, case14):
    p = PerturbSpec(runs=1)
    base = initial_state(prob14, case14, "case_values")
    y = perturbed_start(prob14, case14, p, 3, 0)
    np.testing.assert_array_equal(y, perturbed_start(prob14, case14, p, 3, 0))
    assert not np.array_equal(y, perturbed_start(prob14, case14, p, 3, 1))
    va0, vm0 = split_state(prob14, base)
    va, vm = split_state(prob14, y)
    np.testing.assert_array_equal(vm, vm0)
    dev = va - va0
    moved = np.flatnonzero(dev)
    assert len(moved) == round(0.5 * len(prob14.idx.pvpq))
    assert set(moved) <= set(prob14.idx.pvpq)
    assert np.all(np.abs(dev) <= 0.005 + 1e-15)


def test_zero_width_perturbation_reproduces_unperturbed_start(prob9, case9):
    p = PerturbSpec(runs=1, angle_range_rad=(0.0, 0.0))
    np.testing.assert_array_equal(
        perturbed_start(prob9, case9, p, 0, 0), initial_state(prob9, case9, "case_values")
    )
    spec = spec9(perturb=dataclasses.replace(p, runs=3))
    rep = run_limit_test(spec)
    its = {r.iterations for s in rep.limit for r in s.runs if s.method == "m1"}
    assert len(its) == 1


def test_perturb_spec_validation():
    with pytest.raises(ValueError):
        PerturbSpec(runs=0)
    with pytest.raises(ValueError):
        PerturbSpec(fraction_of_buses=0.0)
    with pytest.raises(ValueError):
        PerturbSpec(angle_range_rad=(0.1, -0.1))
    with pytest.raises(ValueError):
        PerturbSpec(iter_cap=0)


def test_heavily_loaded_case_is_reported_not_raised(tmp_path, case9):
    buses = [dataclasses.replace(b, pd=50 * b.pd, qd=50 * b.qd) for b in case9.buses]
    heavy = dataclasses.replace(case9, buses=tuple(buses))
    path = tmp_path / "heavy9.m"
    path.write_text(write_case_m(heavy))
    rep = run_comparison(ExperimentSpec((str(path),), ("m1", "m8-rodas3d")))
    nr = rep.cell("heavy9", "m1")
    assert nr.status in (DIVERGED, SINGULAR, MAX_ITER)
    assert cell_label(nr.status, nr.iterations, nr.wall_time) in ("D.", "NC.")
    assert rep.cell("heavy9", "m8-rodas3d").status in (CONVERGED, DIVERGED, SINGULAR, MAX_ITER)


def test_missing_case_becomes_error_cell(tmp_path):
    rep = run_comparison(ExperimentSpec((str(tmp_path / "nope.m"),), ("m1",)))
    assert rep.cells[0].status == "error"
    assert cell_label("error", 0, 0.0) == "ERR"


def test_trace_csv_is_byte_identical_and_complete(tmp_path):
    cells = [run_comparison(spec9(methods=("m8-rodas4",))).cells[0] for _ in range(2)]
    p1, j1 = emit_trace_csv(cells[0], tmp_path / "a.csv")
    p2, _ = emit_trace_csv(cells[1], tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "iter,err_inf,h,accepted"
    c = cells[0].counters
    assert len(lines) - 1 == c["accepted_steps"] + c["rejected_steps"]
    series = json.loads(j1.read_text())
    assert len(series["iter"]) == len(lines) - 1


def test_write_outputs(tmp_path):
    rep = run_comparison(spec9())
    rep.limit = run_limit_test(spec9(perturb=PerturbSpec(runs=2))).limit
    write_outputs(rep, tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["schema"] == 1 and len(doc["cells"]) == 2 and len(doc["limit"]) == 2
    assert (tmp_path / "summary.txt").read_text().startswith("case")
    assert (tmp_path / "summary.csv").read_text().count("\n") == 3 + 1 + 3
    assert sorted(p.name for p in (tmp_path / "traces").iterdir()) == [
        "case9__m1.csv", "case9__m1.json", "case9__m8-rodas3d.csv", "case9__m8-rodas3d.json",
    ]


def test_spec_loading(tmp_path):
    (tmp_path / "c.m").write_text(case_path("case9").read_text())
    doc = {"cases": ["c.m", "case14"], "methods": ["m1"], "seed": 4,
           "opts": {"m1": {"tol": 1e-8}}, "perturb": {"runs": 3, "angle_range_rad": [-0.01, 0.01]}}
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(doc))
    spec = ExperimentSpec.load(p)
    assert spec.cases == (str(tmp_path / "c.m"), "case14")
    assert spec.perturb == PerturbSpec(runs=3, angle_range_rad=(-0.01, 0.01))
    rep = run_comparison(spec)
    assert [c.case for c in rep.cells] == ["c", "case14"]
    assert all(c.status == CONVERGED for c in rep.cells)


@pytest.mark.parametrize("doc", [
    [],
    {"cases": [], "methods": ["m1"]},
    {"cases": ["case9"], "methods": []},
    {"cases": ["case9"], "methods": ["m99"]},
    {"cases": ["case9"], "methods": ["m1"], "extra": 1},
    {"cases": ["case9"], "methods": ["m1"], "perturb": {"runs": -1}},
])
def test_spec_errors(doc):
    with pytest.raises((ValueError, TypeError)):
        ExperimentSpec.from_dict(doc)


def test_joint_mean_and_tables():
    spec = spec9(perturb=PerturbSpec(runs=4))
    rep = run_limit_test(spec)
    means = joint_mean_iterations(rep, "case9", ["m1", "m8-rodas3d"])
    assert means["m1"] == rep.limit_summary("case9", "m1").mean_iterations
    assert rep.limit_summary("case9", "m1").convergence_rate == 1.0
    text = rep.summary_text()
    assert "mean_iterations" in text
    assert format_table([["a", "bb"], ["ccc", "d"]]) == "a    bb\nccc  d"
    with pytest.raises(KeyError):
        rep.cell("case9", "m1")
    assert isinstance(BenchReport(seed=0).summary_csv(), str)


def test_cell_labels():
    assert cell_label(CONVERGED, 5, 0.123) == "5(0.12s)"
    assert cell_label(DIVERGED, 5, 0.1) == "D."
    assert cell_label(SINGULAR, 5, 0.1) == "D."
    assert cell_label(MAX_ITER, 5, 0.1) == "NC."
