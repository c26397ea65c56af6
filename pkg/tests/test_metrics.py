import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acof.core import DesignPoint, EvaluationRecord, Measurements
from acof.metrics import (
    EmptyReportError,
    compute_report,
    count_regions,
    regret,
    reliability_rates,
    round_series,
    top_k_summary,
)

from conftest import unit_space
from helpers import record

OK = Measurements(60.0, 1e8, 70.0, 1e-3, True)


def fom_records(foms, rounds=None):
    out = []
    for i, f in enumerate(foms):
        rnd = 0 if rounds is None else rounds[i]
        meas = OK if f is not None else Measurements.invalid("x")
        out.append(EvaluationRecord(i + 1, rnd, DesignPoint((0.5, 0.5)), meas, f, f is not None))
    return out


def test_regret_fixture():
    # best-so-far: -1, -0.5, -0.5, -0.25 -> mean gap 2.25 / 4
    assert regret(fom_records([-1, -0.5, -0.5, -0.25])) == 0.5625
    assert regret(fom_records([0.0, 0.0, 0.0])) == 0.0


def test_regret_counts_floor_before_first_valid():
    assert regret(fom_records([None, None, -1.0, -2.0])) == pytest.approx((6 + 6 + 1 + 1) / 4)


def test_regret_without_seed_steps():
    recs = fom_records([-3.0, -1.0, -2.0, -0.5], rounds=[0, 0, 1, 1])
    assert regret(recs, include_seed=False) == pytest.approx((1.0 + 0.5) / 2)


@given(st.lists(st.one_of(st.none(), st.floats(-6, 0)), min_size=1, max_size=40))
@settings(max_examples=300, deadline=None)
def test_regret_bounds_and_monotone_running_best(foms):
    r = regret(fom_records(foms))
    assert 0.0 <= r <= 6.0
    # appending a perfect design cannot raise the average gap
    assert regret(fom_records(foms + [0.0])) <= r + 1e-12


def test_top_k_averages_best_k():
    recs = fom_records([-3.0, -1.0, -2.0, None, -0.5])
    t = top_k_summary(recs, 2)
    assert t.k == 2 and t.fom == pytest.approx(-0.75)
    with pytest.raises(EmptyReportError):
        top_k_summary(fom_records([None]), 10)


def test_reliability_rates():
    recs = fom_records([-1.0, None, -2.0, None])
    assert reliability_rates(recs) == (0.5, 0.5)
    assert reliability_rates([]) == (0.0, 0.0)


def test_round_series():
    recs = fom_records([-3.0, -1.0, -2.0, None, -0.5], rounds=[0, 0, 1, 1, 2])
    s = round_series(recs)
    assert [row["best"] for row in s] == [-1.0, -2.0, -0.5]
    assert [row["best_so_far"] for row in s] == [-1.0, -1.0, -0.5]


def test_regions_from_two_clouds():
    space = unit_space(3)
    rng = np.random.default_rng(0)
    recs = [record(i + 1, 0, space, np.clip(c + rng.normal(0, 0.02, 3), 0, 1))
            for i, c in enumerate([np.full(3, 0.2)] * 30 + [np.full(3, 0.8)] * 30)]
    assert count_regions(recs, space) == 2
    assert count_regions(recs[:5], space) == 0


def test_report_table_units_and_empty_case():
    space = unit_space(2)
    recs = [record(1, 0, space, [0.5, 0.5], Measurements(70.0, 2.5e8, 80.0, 4e-4, True)),
            record(2, 0, space, [0.1, 0.1], Measurements.invalid("trap"))]
    row = compute_report(recs, space).table_row()
    assert row["UGBW (MHz)"] == 250.0 and row["Power (mW)"] == 0.4
    assert row["Sim. Valid (%)"] == 50.0
    empty = compute_report([record(1, 0, space, [0.5, 0.5], Measurements.invalid("x"))], space)
    assert empty.top_k is None and empty.table_row()["FoM"] is None and empty.regret == 6.0


def test_count_regions_ignores_affine_rescaling():
    from acof.core import ParameterSpace, ParameterSpec

    rng = np.random.default_rng(1)
    Z = np.clip(np.vstack([rng.normal(c, 0.03, (25, 2)) for c in ((0.2, 0.3), (0.7, 0.8))]), 0, 1)
    a = unit_space(2)
    b = ParameterSpace([ParameterSpec("x0", 5.0, 25.0), ParameterSpec("x1", -3.0, 0.5)])
    ra = [record(i + 1, 0, a, z) for i, z in enumerate(Z)]
    rb = [record(i + 1, 0, b, z) for i, z in enumerate(Z)]
    assert count_regions(ra, a) == count_regions(rb, b) == 2


@given(st.lists(st.floats(-6, 0), min_size=1, max_size=30), st.floats(-6, 0))
@settings(max_examples=200, deadline=None)
def test_regret_append_and_prefix(foms, extra):
    best = max(foms)
    n = len(foms)
    appended = regret(fom_records(foms + [min(extra, best)]))
    # b_{t+1} = b_t: the new step adds the current gap
    assert appended == pytest.approx((regret(fom_records(foms)) * n - best) / (n + 1))
    # once the running best is flat, adding steps can only lower the average
    # toward the final gap
    ordered = sorted(foms)
    full = regret(fom_records(ordered))
    assert all(regret(fom_records(ordered[:i])) >= full - 1e-12 for i in range(1, n + 1))
