import math

import pytest
from hypothesis import given, settings, strategies as st

from plbounds.certify import (
    Access,
    PipelineConfig,
    certificate_from_bracket,
    certify_nopar,
    certify_nopar0,
    check_mod_vs_multiplier,
    koenigs_restriction,
    period_bound,
    renorm_certify_pipeline,
    rhs_value,
    verdict_for,
)
from plbounds.errors import PreconditionError, StageFailure
from plbounds.extremal import ModulusEstimate
from plbounds.poly import Poly


def test_access_multipliers():
    assert Access("A", 3).conj_multiplier == 8
    assert Access("C", 2, degree=3).conj_multiplier == 9
    assert Access("B", 1).conj_multiplier == "unavailable"
    with pytest.raises(PreconditionError):
        Access("D", 1)


def test_rhs_values():
    assert rhs_value(0, 8) == 0.0
    assert rhs_value(1, 8) == pytest.approx(math.pi / math.log(8), rel=1e-15)
    assert rhs_value(1, 8) <= math.pi / math.log(8)
    assert rhs_value(3, 8) == pytest.approx(3 * math.pi / math.log(8), rel=1e-15)
    assert rhs_value(1, 8) == pytest.approx(1.5108, abs=1e-4)


def test_verdict_semantics():
    assert verdict_for(2.0, 3.0, 1.5) == "consistent_strong"
    assert verdict_for(1.0, 3.0, 1.5) == "consistent"
    assert verdict_for(1.0, 1.2, 1.5) == "suspect"


def test_synthetic_suspect():
    # mod upper 0.2 gives 1/mod >= 5, short of 2 pi / log 2
    mod = ModulusEstimate(0.19, 0.2, 0.01)
    cert = certificate_from_bracket("nopar0", mod, 2, 2)
    assert cert.lhs[0] == pytest.approx(5.0)
    assert cert.rhs == pytest.approx(2 * math.pi / math.log(2))
    assert cert.verdict == "suspect"


def test_empty_cut_family_is_vacuous():
    cert = certificate_from_bracket("nopar0", ModulusEstimate(0.5, 0.6, 0.01), 0, 8)
    assert cert.rhs == 0.0
    assert cert.verdict == "consistent_strong"


def test_fabricated_extra_rays():
    mod = ModulusEstimate(0.01, 0.02, 0.01)
    c0 = certificate_from_bracket("nopar0", mod, 1, 8)
    c1 = certificate_from_bracket("nopar", mod, 1 + 2, 8, C_count=2)
    assert c1.rhs == pytest.approx(3 * math.pi / math.log(8))
    assert c1.rhs >= c0.rhs


@settings(max_examples=100)
@given(st.integers(0, 20), st.integers(0, 20), st.integers(2, 64))
def test_nopar_rhs_dominates(z, extra, D):
    assert rhs_value(z + extra, D) >= rhs_value(z, D)


def test_period_bound_examples():
    assert period_bound(3, 0.1) == 3
    assert period_bound(2, 0.3) == 0
    with pytest.raises(PreconditionError):
        period_bound(2, 1e-7)
    assert period_bound(2, 1e-6) > 10 ** 5


@settings(max_examples=100)
@given(st.integers(2, 1000), st.floats(1e-6, 10.0))
def test_period_bound_matches_formula(D, mu):
    s = period_bound(D, mu)
    assert s <= math.log(D) / (mu * math.pi) < s + 1 + 1e-9


def test_koenigs_round_disks_bracket_the_multiplier():
    # coarse version; the acceptance suite checks tightness at full resolution
    p = Poly((0, 0, 1))
    pl = koenigs_restriction(p, 1 + 0j, 0.2, 0.004)
    cert, ratio = check_mod_vs_multiplier(p, 1 + 0j, pl)
    assert cert.verdict in ("consistent", "consistent_strong")
    assert 2 * math.pi * cert.mod_lower <= math.log(2) <= 2 * math.pi * cert.mod_upper
    assert 0.8 <= ratio <= 1.02
    assert 2 * math.pi * cert.mod_lower <= math.log(2) * 1.02


def test_koenigs_basilica_beta():
    p = Poly.quadratic(-1)
    beta = (1 + math.sqrt(5)) / 2
    pl = koenigs_restriction(p, beta, 0.2, 0.004)
    cert, ratio = check_mod_vs_multiplier(p, beta, pl)
    assert cert.verdict != "suspect"
    assert ratio <= 1.02


def test_shrunken_inner_disk_is_flagged():
    p = Poly((0, 0, 1))
    pl = koenigs_restriction(p, 1 + 0j, 0.2, 0.004, shrink=0.5)
    cert, ratio = check_mod_vs_multiplier(p, 1 + 0j, pl)
    # the modulus grows by log 2 / (2 pi), doubling it past the bound
    assert 2 * math.pi * cert.mod_lower <= 2 * math.log(2) <= 2 * math.pi * cert.mod_upper
    assert cert.verdict == "suspect"


def test_mod_vs_multiplier_preconditions():
    p = Poly((0, 0, 1))
    pl = koenigs_restriction(p, 1 + 0j, 0.1, 0.01)
    with pytest.raises(PreconditionError):
        check_mod_vs_multiplier(p, 0.5, pl)
    # z^2 - 1/2 has the attracting fixed point (1 - sqrt 3) / 2
    with pytest.raises(PreconditionError):
        koenigs_restriction(Poly.quadratic(-0.5), (1 - math.sqrt(3)) / 2, 0.1, 0.01)


def test_no_attached_cuts_for_square_map():
    with pytest.raises(StageFailure) as exc:
        renorm_certify_pipeline(Poly((0, 0, 1)), 1, 0j, PipelineConfig(h=0.005))
    assert exc.value.stage == "attached"
    assert "no_attached_cuts" in str(exc.value)


def test_degree_overflow_is_a_stage_failure():
    with pytest.raises(StageFailure) as exc:
        renorm_certify_pipeline(Poly.quadratic(-1.76), 40, 0j)
    assert exc.value.stage == "iterate"


def test_window_failure_outside_the_real_family():
    with pytest.raises(StageFailure) as exc:
        renorm_certify_pipeline(Poly.quadratic(0.3j), 3, 0j)
    assert exc.value.stage == "window"


@pytest.fixture(scope="module")
def airplane_bundle():
    return renorm_certify_pipeline(Poly.quadratic(-1.76), 3, 0j)


def test_pipeline_bundle_contents(airplane_bundle):
    b = airplane_bundle
    assert b["pl"]["degree"] == 2
    assert b["paralegal"]["status"] == "paralegal"
    c0, c1 = b["certificates"]
    assert c0["theorem"] == "nopar0" and c1["theorem"] == "nopar"
    assert c0["degree_of_iterate"] == 8
    assert c0["rhs"] == pytest.approx(len(c0["Z_angles"]) * math.pi / math.log(8))
    assert c1["rhs"] >= c0["rhs"]
    assert c0["verdict"] in ("consistent", "consistent_strong")
    assert b["period_check"]["ok"]
    assert b["period_check"]["s"] <= period_bound(8, b["modulus"]["lower"])


def test_perturbation_keeps_cut_period(airplane_bundle):
    moved = renorm_certify_pipeline(Poly.quadratic(-1.76 + 1e-6), 3, 0j)
    assert moved["period_check"]["s"] == airplane_bundle["period_check"]["s"]
    assert moved["certificates"][0]["Z_angles"] == airplane_bundle["certificates"][0]["Z_angles"]


def test_certify_functions_on_pipeline_restriction():
    from plbounds.regions import build_pl_restriction, disk_region
    p = Poly((0, 0, 1))
    pl = build_pl_restriction(p, disk_region(0j, 4.0, 0.05), 0j)
    mod = ModulusEstimate(0.1, 0.11, 0.05)
    c0 = certify_nopar0(pl, [], mod)
    c1 = certify_nopar(pl, [], 0, mod, B_detected=("fatou",))
    assert c0.rhs == c1.rhs == 0.0
    assert any("detected" in a for a in c1.annotations)
    with pytest.raises(PreconditionError):
        certify_nopar(pl, [], -1, mod)
