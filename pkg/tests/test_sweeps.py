import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltamix.model import ConfigError
from deltamix.response import TABLE2, reduced_forms
from deltamix.sweeps import (
    SweepAxis,
    SweepPlan,
    all_figures,
    figure_data,
    find_extremum,
    level_crossings,
    resolve_inputs,
    run_sweep,
    section_ratios,
    table2_report,
    thread_count,
)

ETA1_MAX = 0.19528545944941989616
Y_ETA1 = 0.363490874447574212


# --- inputs ---------------------------------------------------------------------


def test_resolve_inputs_forms():
    r, y = resolve_inputs(3, {"y": 2.0, "lambda3*y": 6.0})
    assert r.lambda3 == pytest.approx(3.0) and y == 2.0
    assert r.lambda2 == pytest.approx(1e-6)
    r, _ = resolve_inputs(1, {"y": 1.0, "lambda1": 2.0, "lambda2": 8.0})
    assert r.lambda3 == pytest.approx(4.0)
    with pytest.raises(ConfigError):
        resolve_inputs(1, {"lambda1": 1.0})
    with pytest.raises(ConfigError):
        resolve_inputs(1, {"y": 1.0, "bogus": 1.0})
    with pytest.raises(ConfigError):
        resolve_inputs(2, {"y": 1.0, "lambda1": 1.0})


def test_section_ratios():
    assert section_ratios(1, 2.0).lambda3 == 1e6
    assert section_ratios(2, 2.0).lambda3 == 1e-6
    assert section_ratios(3, 2.0).lambda2 == 1e-6
    with pytest.raises(ConfigError):
        section_ratios(4, 1.0)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("DELTAMIX_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("DELTAMIX_THREADS", "x")
    with pytest.raises(ConfigError):
        thread_count()


# --- sweeps -------------------------------------------------------------------------


def test_axis_values_hit_decades():
    v = SweepAxis("y", 1e-2, 1e2, 2001).values()
    assert v[1000] == 1.0 and v[0] == 1e-2 and v[-1] == 1e2
    assert np.all(np.diff(v) > 0)
    lin = SweepAxis("offset", -1.0, 1.0, 3, "linear").values()
    assert list(lin) == [-1.0, 0.0, 1.0]


def test_axis_validation():
    for bad in (dict(name="nope"), dict(num=1), dict(start=0.0), dict(scale="cubic"), dict(stop=1e-2)):
        kw = dict(name="y", start=1e-2, stop=1e2, num=5)
        kw.update(bad)
        with pytest.raises(ConfigError):
            SweepAxis(**kw)


def test_plan_validation():
    ax = (SweepAxis("y", 0.1, 1, 2),)
    with pytest.raises(ConfigError):
        SweepPlan(1, 3, ax)
    with pytest.raises(ConfigError):
        SweepPlan(1, 1, ax, {"y": 1.0})
    with pytest.raises(ConfigError):
        SweepPlan(1, 1, ())


def test_two_point_row_contract():
    tab = run_sweep(SweepPlan(1, 1, (SweepAxis("y", 0.1, 1.0, 2),), {"lambda1": 1.0}))
    assert len(tab.rows) == 2
    assert tab.input_names == ("y",)


def test_two_axis_row_major():
    plan = SweepPlan(3, 5, (SweepAxis("y", 0.5, 2, 3), SweepAxis("lambda3", 1, 4, 2)))
    tab = run_sweep(plan)
    assert len(tab.rows) == 6
    assert [r.inputs for r in tab.rows][:2] == [(0.5, 1.0), (0.5, 4.0)]


def test_fig3b_maximum():
    plan = SweepPlan(1, 1, (SweepAxis("y", 1e-2, 1e2, 2001),), {"lambda1": 1.0}, model="reduced")
    tab = run_sweep(plan)
    i = int(np.argmax(tab.column("abs_eta")))
    assert tab.column("y")[i] == pytest.approx(Y_ETA1, abs=1e-3)
    assert tab.column("abs_eta")[i] == pytest.approx(0.19529, abs=1e-4)


def test_gain_decreases_with_lambda1():
    gs = []
    for lam in (0.2, 1.0, 10.0):
        tab = run_sweep(SweepPlan(1, 1, (SweepAxis("y", 0.3, 3.0, 5),), {"lambda1": lam}))
        gs.append(tab.column("abs_G"))
    assert np.all(gs[0] > gs[1]) and np.all(gs[1] > gs[2])


def test_general_and_reduced_sweeps_agree():
    ax = (SweepAxis("y", 0.1, 10, 9),)
    a = run_sweep(SweepPlan(1, 2, ax, {"lambda1": 0.5, "splitting": 1e18}))
    b = run_sweep(SweepPlan(1, 2, ax, {"lambda1": 0.5}, model="reduced"))
    assert np.allclose(a.column("abs_G"), b.column("abs_G"), rtol=1e-4)


def test_sweep_deterministic_across_threads():
    plan = SweepPlan(2, 3, (SweepAxis("y", 0.1, 10, 7), SweepAxis("lambda2", 0.1, 10, 5)))
    a, b, c = run_sweep(plan, 1), run_sweep(plan, 1), run_sweep(plan, 4)
    assert a.rows == b.rows == c.rows


# --- extremum finder ------------------------------------------------------------------


def test_concave_quadratic():
    res = find_extremum(lambda x: -(x - 2) ** 2, [(0.0, 10.0)], scale="linear")
    assert res.argument[0] == pytest.approx(2.0, abs=1e-5)
    assert res.value == pytest.approx(0.0, abs=1e-9)
    assert not res.boundary


def test_eta1_maximum():
    res = find_extremum(lambda y: abs(reduced_forms(1, 1, 1, 1.0, y)[1]), [(1e-2, 1e2)])
    assert res.argument[0] == pytest.approx(Y_ETA1, abs=1e-4)
    assert res.value == pytest.approx(ETA1_MAX, abs=1e-4)


def test_eta5_resonant_maximum():
    res = find_extremum(lambda p: abs(reduced_forms(3, 5, 1, p, 1.0)[1]), [(1e-2, 1e2)])
    assert res.argument[0] == pytest.approx((9 + math.sqrt(73)) / 2, abs=1e-3)
    assert res.value == pytest.approx(0.19838, abs=1e-4)


def test_boundary_flag_for_limit_optimum():
    res = find_extremum(lambda x: abs(reduced_forms(1, 1, 1, x, 1.0)[0]), [(1e-3, 1e3)], sense="min")
    assert res.boundary
    assert res.argument[0] == pytest.approx(1e3)


def test_two_dimensional_optimum():
    res = find_extremum(lambda lam, y: abs(reduced_forms(1, 1, 1, lam, y)[1]), [(1e-2, 1e2), (1e-2, 1e2)])
    # the global max of |eta1| over lambda1 sits at lambda1 = 1
    assert res.argument[0] == pytest.approx(1.0, rel=1e-3)
    assert res.argument[1] == pytest.approx(Y_ETA1, rel=1e-3)


def test_refinement_monotone_and_denser_grid():
    f = lambda y: abs(reduced_forms(1, 2, 1, 0.0, y)[0])  # noqa: E731
    res = find_extremum(f, [(1e-2, 1e2)], sense="min")
    vals = [v for _, _, v in res.history]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    dense = np.logspace(-2, 2, 200001)
    assert res.value <= min(f(y) for y in dense[::50]) + 1e-12
    assert res.value == pytest.approx(0.72304682056276590158, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 9.5))
def test_quadratic_any_center(c):
    res = find_extremum(lambda x: -(x - c) ** 2, [(0.0, 10.0)], scale="linear")
    assert res.argument[0] == pytest.approx(c, abs=1e-5)


def test_extremum_errors():
    with pytest.raises(ConfigError):
        find_extremum(lambda x: x, [(1.0, 0.0)])
    with pytest.raises(ConfigError):
        find_extremum(lambda x: x, [(0.0, 1.0)], sense="best", scale="linear")
    with pytest.raises(ConfigError):
        find_extremum(lambda x: x, [(0.0, 1.0)])


# --- summary table ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def report():
    return table2_report()


def test_table2_all_pass(report):
    assert len(report.rows) == len(TABLE2) == 56
    bad = [r.point.label for r in report.rows if r.status != "pass"]
    assert not bad
    assert report.passed


def test_table2_not_tabulated(report):
    assert len(report.not_tabulated) == 8
    assert all("attenuation" in s for s in report.not_tabulated)


def test_table2_g2_row(report):
    row = next(r for r in report.rows if r.point.label == "l=1 k=2 branch=1 detuned G")
    assert row.closed_form == pytest.approx(0.72305, abs=1e-4)
    assert abs(row.numeric - row.closed_form) <= 1e-4


def test_table2_g5_detuned(report):
    row = next(r for r in report.rows if r.point.label == "l=3 k=5 branch=1 detuned G amplification")
    assert row.closed_form == pytest.approx(9 / 8)
    assert row.arguments["lambda3*y"] == pytest.approx(3.0, rel=1e-3)


def test_table2_limits_monotone(report):
    for r in report.rows:
        if len(r.levels) > 1:
            assert r.monotone, r.point.label


# --- figures ------------------------------------------------------------------------


def test_figures_cover_3_to_8():
    figs = all_figures()
    assert [f.figure for f in figs] == [3, 4, 5, 6, 7, 8]
    with pytest.raises(ConfigError):
        figure_data(9)


def test_fig3_series_values():
    fd = figure_data(3)
    assert sorted(set(fd.table.column("lambda1"))) == [0.2, 1.0, 10.0]
    assert len(fd.table.rows) == 3 * 2001


def test_fig3b_regression():
    tab = figure_data(3).table
    sel = tab.column("lambda1") == 1.0
    eta, y = tab.column("abs_eta")[sel], tab.column("y")[sel]
    i = int(np.argmax(eta))
    assert y[i] == pytest.approx(0.36349, abs=1e-3)
    assert eta[i] == pytest.approx(0.19529, abs=1e-4)


def test_fig7_crossing_at_one():
    tab = figure_data(7).table
    for y in (0.0, 1.0, 2.0, 4.0):
        sel = tab.column("y") == y
        xs = level_crossings(tab.column("lambda3*y")[sel], tab.column("abs_G")[sel], 1.0)
        assert len(xs) == 1
        assert xs[0] == pytest.approx(1.0, abs=1e-6)


def test_level_crossings_interpolates():
    assert level_crossings([0, 1, 2], [0.0, 0.5, 2.0], 1.0) == [pytest.approx(1 + 0.5 / 1.5)]
    assert level_crossings([0, 1], [1.0, 3.0]) == [0.0]
