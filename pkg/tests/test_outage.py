from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermocascade.outage import (
    ACCIDENTAL_TRIP_S,
    GenTripParams,
    LineTripParams,
    accumulate,
    gen_curve,
    gen_overload_limit,
    gen_trip_probability,
    generator_trip_time,
    line_overload_limit,
    line_trip_probability,
    line_trip_time,
    q_violation,
    violated_limit,
)

LP = LineTripParams()
GP = GenTripParams()


def f_t_closed_form(r):
    """Exponential through (1.01, 0.3) and (1.5, 1.0)."""
    b2 = math.log(1.0 / 0.3) / (1.5 - 1.01)
    return 0.3 * math.exp(b2 * (r - 1.01))


def test_line_curve_fixed_points():
    assert line_trip_probability(0.8) == 0.001
    assert line_trip_probability(1.0) == 0.001
    assert line_trip_probability(1.01) == pytest.approx(0.3, abs=1e-12)
    assert line_trip_probability(1.5) == 1.0
    assert line_trip_probability(3.0) == 1.0
    assert line_trip_probability(1.25) == pytest.approx(f_t_closed_form(1.25), abs=1e-12)
    assert line_trip_probability(1.25) == pytest.approx(0.5411, abs=1e-3)
    assert LP.b2 == pytest.approx(2.45709, abs=1e-5)


@pytest.mark.parametrize("edge", [1.0, 1.01, 1.5])
def test_line_curve_continuity(edge):
    h = 1e-12
    lo, hi = line_trip_probability(edge - h), line_trip_probability(edge + h)
    if edge == 1.0:
        # a jump from p1 to the exponential is allowed only at R = 1 itself
        assert line_trip_probability(1.0 + h) == pytest.approx(0.001, abs=1e-9)
    assert hi == pytest.approx(lo, abs=1e-9)


@given(st.floats(0, 5), st.floats(0, 5))
def test_line_curve_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    pa, pb = line_trip_probability(lo), line_trip_probability(hi)
    assert 0.001 <= pa <= pb <= 1.0


def test_line_curve_vectorized():
    r = np.array([0.5, 1.01, 1.25, 2.0])
    assert line_trip_probability(r) == pytest.approx([0.001, 0.3, f_t_closed_form(1.25), 1.0])


def test_line_params_validation():
    with pytest.raises(ValueError):
        LineTripParams(p1=0.5, p2=0.3)
    with pytest.raises(ValueError):
        LineTripParams(K=1.005)


CURVES = [(-50.0, 100.0), (0.0, 100.0), (-25.0, 60.0), (-10.0, 0.0)]


@pytest.mark.parametrize("qmin, qmax", CURVES)
def test_gen_curve_breakpoints(qmin, qmax):
    c = gen_curve(qmin, qmax)
    assert gen_trip_probability(0.5 * (qmin + qmax), c) == 0.001
    assert gen_trip_probability(qmax, c) == 0.001
    assert gen_trip_probability(qmin, c) == 0.001
    if qmax > 0:
        assert gen_trip_probability(qmax + c.eps_high, c) == pytest.approx(0.3, abs=1e-12)
        assert gen_trip_probability(1.5 * qmax, c) == pytest.approx(1.0, abs=1e-12)
    if qmin < 0:
        assert gen_trip_probability(qmin - c.eps_low, c) == pytest.approx(0.3, abs=1e-12)
        assert gen_trip_probability(1.5 * qmin, c) == pytest.approx(1.0, abs=1e-12)
    else:
        assert c.k_low == -0.5
        assert gen_trip_probability(-0.5, c) == 1.0


@pytest.mark.parametrize("qmin, qmax", CURVES)
def test_gen_curve_continuity(qmin, qmax):
    c = gen_curve(qmin, qmax)
    h = 1e-9
    edges = [c.k_low, qmin - c.eps_low, qmin, qmax, qmax + c.eps_high, c.k_high]
    # a zero limit leaves an empty epsilon segment and a jump at that limit
    edges = [e for e in edges if e != 0.0 or (qmin != 0.0 and qmax != 0.0)]
    for e in edges:
        lo, hi = gen_trip_probability(e - h, c), gen_trip_probability(e + h, c)
        assert hi == pytest.approx(lo, abs=1e-6)
        assert gen_trip_probability(e, c) == pytest.approx(lo, abs=1e-6)


@given(st.floats(-300, -1), st.floats(1, 300), st.floats(-600, 600), st.floats(-600, 600))
def test_gen_curve_shape(qmin, qmax, a, b):
    c = gen_curve(qmin, qmax)
    pa, pb = gen_trip_probability(a, c), gen_trip_probability(b, c)
    assert 0.001 <= pa <= 1.0 and 0.001 <= pb <= 1.0
    # nondecreasing away from the feasible band on both sides
    if qmax <= a <= b:
        assert pa <= pb + 1e-12
    if b <= a <= qmin:
        assert pa <= pb + 1e-12


def test_zero_accidental_floor_is_finite():
    c = gen_curve(-50.0, 100.0, GenTripParams(p4=0.0))
    assert gen_trip_probability(0.0, c, GenTripParams(p4=0.0)) == 0.0
    assert 0.0 <= gen_trip_probability(100.5, c, GenTripParams(p4=0.0)) < 0.3
    assert line_trip_probability(1.005, LineTripParams(p1=0.0)) < 1e-100


def test_line_timing():
    fd = 147.40
    limit = line_overload_limit(fd)
    assert limit == pytest.approx(10 * fd)
    assert line_trip_time(1.5 * fd, fd, 0.0, limit) == pytest.approx(20.0, abs=1e-12)
    t = line_trip_time(148.89, fd, 0.0, limit)
    assert t == pytest.approx(989.26, abs=0.01)
    assert t == pytest.approx(991.40, rel=0.01)
    assert line_trip_time(148.89, fd, 0.5 * limit, limit) == pytest.approx(t / 2)
    assert line_trip_time(100.0, fd, 0.0, limit) == ACCIDENTAL_TRIP_S == 0.2


@given(st.floats(50, 500), st.floats(0.01, 200), st.floats(0.01, 200), st.floats(0, 0.99))
def test_line_time_inverse_in_excess(fd, e1, e2, used):
    limit = line_overload_limit(fd)
    t1 = line_trip_time(fd + e1, fd, used * limit, limit)
    t2 = line_trip_time(fd + e2, fd, used * limit, limit)
    assert t1 > 0 and t2 > 0
    assert t1 * e1 == pytest.approx(t2 * e2, rel=1e-9)


def test_generator_timing():
    qmax = 150.0
    limit = gen_overload_limit(qmax)
    assert generator_trip_time(q_violation(1.2 * qmax, -50.0, qmax), 0.0, limit) == pytest.approx(1800.0)
    assert generator_trip_time(q_violation(1.4 * qmax, -50.0, qmax), 0.0, limit) == pytest.approx(900.0)
    assert generator_trip_time(0.0, 0.0, limit) == 0.2
    assert gen_overload_limit(0.0) == pytest.approx(360.0)  # 1 MVAr reference for a zero limit


def test_violation_helpers():
    assert q_violation(120.0, -50.0, 100.0) == 20.0
    assert q_violation(-60.0, -50.0, 100.0) == 10.0
    assert q_violation(0.0, -50.0, 100.0) == 0.0
    assert violated_limit(120.0, -50.0, 100.0) == 100.0
    assert violated_limit(-60.0, -50.0, 100.0) == -50.0


def test_accumulate():
    acc = np.zeros(3)
    assert np.array_equal(accumulate(acc, np.array([-1.0, 0.0, -5.0]), 10.0), acc)
    assert accumulate(np.zeros(1), np.array([2.0]), 10.0)[0] == 20.0
    two = accumulate(accumulate(np.zeros(1), np.array([1.0]), 5.0), np.array([1.0]), 15.0)
    assert two[0] == 20.0
    with pytest.raises(ValueError):
        accumulate(acc, acc, -1.0)


def test_marks_follow_sampled_thresholds():
    p = np.array([1.0, 0.0, 0.3])
    seq = []
    for _ in range(2):
        rng = np.random.default_rng(42)
        draws = rng.random((50, 3))
        marks = draws < p
        assert marks[:, 0].all() and not marks[:, 1].any()
        seq.append(marks[:, 2].copy())
    assert np.array_equal(seq[0], seq[1])
