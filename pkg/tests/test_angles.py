from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import functional_graph_periods
from plbounds.angles import (
    Angle,
    CombCut,
    CombCutCycle,
    angle_mulD,
    brute_force_period,
    enumerate_cut_candidates,
    orbit_period,
    orbit_periods,
    period_and_preperiod,
    wake_to_dynamic_angles,
    wedges_pairwise_disjoint,
)
from plbounds.errors import PreconditionError

angles = st.builds(Angle, st.integers(0, 10_000), st.integers(1, 600))


def A(s):
    return Angle.parse(s)


def test_parse_and_reduce():
    assert A("2/4") == Angle(1, 2)
    assert A("5/4") == Angle(1, 4)
    assert str(A("0")) == "0/1"
    for bad in ("3/", "/3", "a/b", "1/0", "1/2/3"):
        with pytest.raises(PreconditionError):
            A(bad)


def test_mulD_examples():
    assert angle_mulD(A("1/3"), 2) == A("2/3")
    assert angle_mulD(A("2/3"), 2) == A("1/3")
    assert angle_mulD(A("9/26"), 3) == A("1/26")


def test_orbit_period_examples():
    assert orbit_period(A("1/3"), 2) == 2
    assert orbit_period(A("1/7"), 2) == 3
    assert orbit_period(A("1/26"), 3) == 3
    assert orbit_period(A("1/4"), 2) == ("preperiodic", 2, 1)
    assert orbit_period(A("1/6"), 2) == ("preperiodic", 1, 2)


def test_wedge_disjointness_examples():
    assert wedges_pairwise_disjoint([CombCut(A("1/3"), A("2/3"))])
    assert not wedges_pairwise_disjoint([CombCut(A("0"), A("1/4")), CombCut(A("1/8"), A("3/8"))])
    assert wedges_pairwise_disjoint([CombCut(A("0"), A("1/4")), CombCut(A("1/2"), A("3/4"))])


def test_candidate_examples():
    assert enumerate_cut_candidates(2, 1) == []
    assert enumerate_cut_candidates(2, 2) == [(A("1/3"), A("2/3"))]
    assert enumerate_cut_candidates(3, 1) == [(A("0"), A("1/2"))]


def test_wake_examples():
    assert wake_to_dynamic_angles(A("0"), A("0")) == (A("1/3"), A("2/3"))
    assert wake_to_dynamic_angles(A("1/2"), A("1/2")) == (A("5/6"), A("1/6"))
    assert wake_to_dynamic_angles(A("1/4"), A("3/4")) == (A("7/12"), A("5/12"))


def test_wedge_is_counterclockwise_arc():
    cut = CombCut(A("1/3"), A("2/3"))
    assert cut.wedge_contains(A("1/2")) and not cut.wedge_contains(A("0"))
    assert not cut.wedge_contains(A("1/3"))
    assert CombCut(A("1/3"), A("1/3")).arc() is None


def test_cycle_properties():
    cyc = CombCutCycle.from_cut(CombCut(A("2/7"), A("5/7")), 8)
    assert cyc.period == 1 and cyc.is_invariant()
    cyc = CombCutCycle.from_cut(CombCut(A("1/7"), A("2/7")), 2)
    assert len(cyc.cuts) == 3 and cyc.is_invariant()
    for c in cyc.cuts:
        for th in (c.thetaR, c.thetaL):
            t = th
            for _ in range(cyc.period):
                t = angle_mulD(t, 2)
            assert t == th
    with pytest.raises(PreconditionError):
        CombCutCycle.from_cut(CombCut(A("1/3"), A("1/7")), 2)


@given(angles, st.sampled_from([2, 3, 4, 5]))
def test_period_matches_literal_orbit_walk(theta, D):
    assert orbit_period(theta, D) == brute_force_period(theta, D)


@pytest.mark.parametrize("D", [2, 3])
def test_orbit_periods_match_graph_oracle_small(D):
    for q in range(1, 300):
        got = orbit_periods(D, q)
        want = functional_graph_periods(D, [q])
        assert np.array_equal(got[0], want[0]) and np.array_equal(got[1], want[1]), q
        lit = [period_and_preperiod(Angle(p, q), D) for p in range(q)]
        assert [tuple(x) for x in zip(got[0].tolist(), got[1].tolist())] == lit


@given(st.sampled_from([2, 3]), st.integers(1, 4))
def test_candidates_invariant_under_mulD(D, s):
    pairs = {frozenset(p) for p in enumerate_cut_candidates(D, s)}
    image = {frozenset((angle_mulD(a, D), angle_mulD(b, D))) for a, b in pairs}
    assert image == pairs


@given(st.lists(st.tuples(angles, angles), min_size=1, max_size=5), st.integers(0, 4))
def test_disjointness_symmetric_and_rotation_invariant(pairs, k):
    cuts = [CombCut(a, b) for a, b in pairs]
    base = wedges_pairwise_disjoint(cuts)
    assert wedges_pairwise_disjoint(cuts[::-1]) == base
    rot = k % len(cuts)
    assert wedges_pairwise_disjoint(cuts[rot:] + cuts[:rot]) == base


@given(angles, angles)
def test_wake_map_is_exact_shift(a, b):
    d1, d2 = wake_to_dynamic_angles(a, b)
    assert (d1.fraction - a.fraction) % 1 == Fraction(1, 3)
    assert (d2.fraction - b.fraction) % 1 == Fraction(2, 3)
