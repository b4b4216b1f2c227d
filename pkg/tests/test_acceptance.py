"""Acceptance criteria, one test (or parametrized group) per criterion.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import cmath
import json
import math
import time

import numpy as np
import pytest

from oracles import functional_graph_periods
from plbounds.angles import Angle, orbit_periods, period_and_preperiod
from plbounds.certify import (
    PipelineConfig,
    check_mod_vs_multiplier,
    koenigs_restriction,
    period_bound,
    renorm_certify_pipeline,
    window_check,
)
from plbounds.cli import run
from plbounds.cubic import slice_grid, slice_rasters
from plbounds.extremal import (
    annulus_modulus,
    el_law_harness,
    harmonic_sum_bound,
    quad_extremal_length,
    rectangle_quad,
    round_annulus,
)
from plbounds.poly import Poly, classify_multiplier
from plbounds.rays import common_landing


@pytest.mark.criterion(1, "round-annulus modulus brackets")
@pytest.mark.parametrize("R", [2.0, math.e, math.exp(2 * math.pi)])
def test_round_annulus_modulus(R):
    n_radial, n_angular = 128, 512
    assert n_radial * n_angular <= 1024 ** 2
    start = time.perf_counter()
    m = annulus_modulus(round_annulus(1.0, R, n_radial, n_angular))
    elapsed = time.perf_counter() - start
    true = math.log(R) / (2 * math.pi)
    assert m.lower <= true <= m.upper
    assert m.width <= 0.01 * true
    assert elapsed < 30


@pytest.mark.criterion(2, "rectangle extremal lengths")
@pytest.mark.parametrize("w,h,expected", [(2.0, 1.0, 2.0), (1.0, 1.0, 1.0)])
def test_rectangle_extremal_length(w, h, expected):
    el = quad_extremal_length(rectangle_quad(w, h, 32))
    assert abs(el.lower - expected) <= 0.01 * expected
    assert abs(el.upper - expected) <= 0.01 * expected


@pytest.mark.criterion(3, "extremal-length law harness")
def test_law_harness():
    start = time.perf_counter()
    rep = el_law_harness(n_configs=100, seed=0, tolerance=0.02)
    assert rep.configs == 100
    assert rep.violations == 0, rep.max_violation
    assert time.perf_counter() - start < 300


@pytest.mark.criterion(4, "summation-trick oracle")
def test_summation_trick():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    violations = 0
    for k in range(10_000):
        m = int(rng.integers(1, 9))
        ells = list(rng.lognormal(0.0, 2.0, m))
        if k % 10 == 0:
            ells[int(rng.integers(m))] = 0.0  # 1/0 = inf forces ell = 0
        inv = math.fsum(math.inf if x == 0 else 1.0 / x for x in ells)
        ell = 0.0 if inv == math.inf else 1.0 / inv
        if ell > 0:
            assert abs(math.fsum(1.0 / x for x in ells) - 1.0 / ell) <= 1e-12 * max(1.0, 1.0 / ell)
        # direct check of the inequality beside the library predicate
        direct = math.fsum(ells) >= m * m * ell - 1e-12 * max(1.0, m * m * ell)
        if not (direct and harmonic_sum_bound(ell, ells)):
            violations += 1
    assert violations == 0
    assert time.perf_counter() - start < 1.0


@pytest.mark.criterion(5, "angle-period exactness")
@pytest.mark.parametrize("D", [2, 3])
def test_angle_periods_exhaustive(D):
    start = time.perf_counter()
    qs = list(range(1, 5001))
    want_pre, want_per = functional_graph_periods(D, qs)
    got_pre = np.concatenate([orbit_periods(D, q)[0] for q in qs])
    got_per = np.concatenate([orbit_periods(D, q)[1] for q in qs])
    assert np.array_equal(got_pre, want_pre)
    assert np.array_equal(got_per, want_per)
    # the scalar Angle route agrees on a sample of reduced angles
    rng = np.random.default_rng(D)
    offsets = np.concatenate([[0], np.cumsum(qs)[:-1]])
    for q in rng.integers(2, 5001, 300):
        p = int(rng.integers(q))
        a = Angle(p, int(q))
        k = offsets[q - 1] + p
        assert period_and_preperiod(a, D) == (int(want_pre[k]), int(want_per[k]))
    assert time.perf_counter() - start < 10


@pytest.mark.criterion(6, "basilica co-landing at a repelling fixed point")
def test_basilica_landing():
    p = Poly.quadratic(-1)
    cut = common_landing(p, "1/3", "2/3")
    assert cut.traceR.status == cut.traceL.status == "landed"
    assert abs(cut.traceR.landing - cut.traceL.landing) < 1e-6
    # fixed points of z^2 - 1 are the roots of z^2 - z - 1
    roots = np.roots([1.0, -1.0, -1.0])
    assert np.min(np.abs(roots - cut.vertex)) < 1e-6
    mult = 2 * cut.vertex
    assert classify_multiplier(mult) == "repelling"
    assert abs(abs(mult) - abs(1 - math.sqrt(5))) < 1e-6
    assert abs(cut.multiplier - mult) < 1e-6


@pytest.mark.criterion(7, "degree-one modulus against the multiplier")
def test_mod_vs_multiplier():
    start = time.perf_counter()
    cases = [(Poly((0, 0, 1)), 1.0, 0.3), (Poly.quadratic(-1), (1 + math.sqrt(5)) / 2, 0.2)]
    for p, a, r in cases:
        pl = koenigs_restriction(p, a, r, 0.002)
        cert, ratio = check_mod_vs_multiplier(p, a, pl)
        log_mult = math.log(abs(2 * a))
        assert 2 * math.pi * cert.mod_lower <= log_mult * 1.02
        assert ratio >= 0.9
        assert cert.verdict != "suspect"
    assert time.perf_counter() - start < 60


@pytest.fixture(scope="module")
def pipeline_run():
    start = time.perf_counter()
    bundle = renorm_certify_pipeline(Poly.quadratic(-1.76), 3, 0j)
    return bundle, time.perf_counter() - start


@pytest.mark.criterion(8, "end-to-end renormalization certificate")
def test_pipeline_certificate(pipeline_run):
    bundle, elapsed = pipeline_run
    assert elapsed < 300
    cfg = PipelineConfig()
    if not window_check(Poly.quadratic(-1.76), 3, 0j, cfg)["ok"]:
        assert -1.79 <= bundle["window"]["parameter"] <= -1.755
    assert bundle["window"]["ok"]
    assert bundle["pl"]["degree"] == 2
    assert bundle["pl"]["basepoint"] == [0.0, 0.0]
    assert bundle["paralegal"]["status"] == "paralegal"
    nopar0 = next(c for c in bundle["certificates"] if c["theorem"] == "nopar0")
    assert nopar0["degree_of_iterate"] == 8
    assert nopar0["rhs"] == pytest.approx(math.pi * len(nopar0["Z_angles"]) / math.log(8))
    assert nopar0["verdict"] in ("consistent", "consistent_strong")
    s = bundle["period_check"]["s"]
    assert 1 <= s <= period_bound(8, bundle["modulus"]["lower"])


@pytest.mark.criterion(9, "cubic slice symmetry and nesting")
@pytest.mark.parametrize("lam", [0, 0.5, 0.99 * cmath.exp(1j * math.pi / 3)])
def test_cubic_slice(lam):
    start = time.perf_counter()
    bs = slice_grid(0j, 2.5, 512)
    conn, ph = slice_rasters(lam, bs)
    assert np.array_equal(conn, conn[::-1, ::-1])
    assert np.array_equal(ph, ph[::-1, ::-1])
    assert not np.any((ph == 2) & (conn == 0))
    assert time.perf_counter() - start < 300


CLI_RUNS = [
    ["modulus", "--annulus", "round", "--r1", "1", "--r2", "2"],
    ["modulus", "--annulus", "round", "--r1", "1", "--r2", repr(math.e)],
    ["modulus", "--annulus", "round", "--r1", "1", "--r2", repr(math.exp(2 * math.pi))],
    ["harness", "--n-configs", "100"],
    ["trace-ray", "--poly", "{basilica}", "--angle", "1/3"],
    ["trace-ray", "--poly", "{basilica}", "--angle", "2/3"],
    ["find-periodic", "--poly", "{basilica}", "--period", "1"],
    ["certify", "--poly", "{airplane}", "--iterate", "3", "--basepoint", "0,0"],
    ["slice", "--lambda", "0,0", "--res", "512"],
    ["slice", "--lambda", "0.5,0", "--res", "512"],
    ["slice", "--lambda", f"{0.99 * math.cos(math.pi / 3)!r},{0.99 * math.sin(math.pi / 3)!r}",
     "--res", "512"],
]


@pytest.mark.criterion(10, "artifacts identical across worker counts")
def test_determinism_across_workers(tmp_path):
    polys = {"basilica": Poly.quadratic(-1), "airplane": Poly.quadratic(-1.76)}
    paths = {}
    for name, p in polys.items():
        paths[name] = tmp_path / f"{name}.json"
        paths[name].write_text(json.dumps(p.to_json()))
    for argv in CLI_RUNS:
        argv = [a.format(**{k: str(v) for k, v in paths.items()}) for a in argv]
        for workers in (1, 8):
            root = tmp_path / f"w{workers}"
            assert run(argv + ["--workers", str(workers), "--out-root", str(root)]) == 0
    one, eight = tmp_path / "w1", tmp_path / "w8"
    files = sorted(f.relative_to(one) for f in one.rglob("*") if f.is_file())
    assert files == sorted(f.relative_to(eight) for f in eight.rglob("*") if f.is_file())
    assert len(files) > 20
    for rel in files:
        assert (one / rel).read_bytes() == (eight / rel).read_bytes(), str(rel)
