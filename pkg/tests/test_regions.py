import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from plbounds.errors import PreconditionError
from plbounds.poly import Poly, green_potential
from plbounds.rays import common_landing
from plbounds.regions import (
    Grid,
    Region,
    build_pl_restriction,
    containment_margin,
    core_component,
    critical_points_in,
    disk_region,
    equipotential_region,
    paralegal_check,
    pl_degree,
    point_in_wedge,
    pullback_component,
    truncate_by_wedges,
)


def _hausdorff_cells(a: Region, b: Region) -> float:
    """Symmetric-difference reach in cells: max distance from a differing cell to the other set."""
    diff_a = a.mask & ~b.mask
    diff_b = b.mask & ~a.mask
    d = 0.0
    if diff_a.any():
        d = max(d, float(ndimage.distance_transform_edt(~b.mask)[diff_a].max()))
    if diff_b.any():
        d = max(d, float(ndimage.distance_transform_edt(~a.mask)[diff_b].max()))
    return d


@pytest.mark.parametrize("coeffs,t,radius", [((0, 0, 1), math.log(2), 2.0),
                                             ((0, 0, 0, 1), math.log(8), 8.0)])
def test_equipotential_of_power_map_is_round(coeffs, t, radius):
    h = radius / 100
    U = equipotential_region(Poly(coeffs), t, h)
    r = np.abs(U.cell_centers())
    assert r.max() < radius and r.max() > radius - 2 * h
    assert U.is_jordan_disk()
    assert abs(U.area() - math.pi * radius ** 2) < 2 * math.pi * radius * 2 * h


def test_basilica_equipotential_contains_real_segment(basilica):
    U = equipotential_region(basilica, 1.0, 0.01)
    assert U.is_jordan_disk()
    xs = np.linspace(-1.62, 1.62, 200)
    assert U.contains(xs.astype(complex)).all()
    # sampled membership matches direct evaluation of the potential away from the level set
    rng = np.random.default_rng(1)
    z = rng.uniform(-2.5, 2.5, 400) + 1j * rng.uniform(-2.5, 2.5, 400)
    g = np.array([green_potential(basilica, complex(w)) for w in z])
    clear = np.abs(g - 1.0) > 0.05
    assert np.array_equal(U.contains(z)[clear], (g < 1.0)[clear])


def test_truncate_empty_cut_list_is_identity(basilica):
    U = disk_region(0j, 2.0, 0.02)
    assert np.array_equal(truncate_by_wedges(U, []).mask, U.mask)


def test_truncate_removes_the_wedge_side(basilica):
    # the wedge of the 1/3, 2/3 cut holds the ray 1/2, which lands at -beta
    cut = common_landing(basilica, "1/3", "2/3")
    U = disk_region(0j, 2.0, 0.01)
    W = truncate_by_wedges(U, [cut], basepoint=0j)
    beta = (1 + math.sqrt(5)) / 2
    assert W.contains(np.array([0j, complex(beta) - 0.05]))[0:2].all()
    assert not W.contains(np.array([complex(-beta)]))[0]
    # the side test uses the traced cut polygon: kept cells are outside the wedge
    z = W.cell_centers()
    pick = z[np.linspace(0, z.size - 1, 200).astype(int)]
    assert not any(point_in_wedge(cut, complex(w)) for w in pick)
    assert W.is_jordan_disk()


def test_truncate_with_huge_clearance_only_removes_the_cut(basilica):
    cut = common_landing(basilica, "1/3", "2/3")
    U = disk_region(0j, 2.0, 0.02)
    W = truncate_by_wedges(U, [cut], clearance=10.0, basepoint=0j)
    removed = U.n_cells - W.n_cells
    # a thin band along the curve, far fewer cells than the wedge side
    assert 0 < removed < 0.1 * U.n_cells


@pytest.mark.parametrize("coeffs,R,expected", [((0, 0, 1), 4.0, 2.0), ((0, 0, 0, 1), 8.0, 2.0)])
def test_pullback_of_disk_under_power_map(coeffs, R, expected):
    h = 0.02
    U0 = disk_region(0j, R, h)
    U1 = pullback_component(Poly(coeffs), U0, 0j)
    r = np.abs(U1.cell_centers())
    assert expected - 3 * h < r.max() < expected


def test_pullback_of_equipotential_halves_the_level(basilica):
    h = 0.01
    U0 = equipotential_region(basilica, 1.0, h)
    U1 = pullback_component(basilica, U0, 0j)
    ref = Region(U1.grid, _resample(equipotential_region(basilica, 0.5, h), U1.grid))
    # the conservative pullback sits inside the true preimage, within a few cells of its boundary
    assert _hausdorff_cells(U1, ref) <= 4


def _resample(region: Region, grid: Grid) -> np.ndarray:
    return region.contains(grid.centers().ravel()).reshape(grid.shape)


@settings(max_examples=6)
@given(st.sampled_from([-1.0, -0.12 + 0.75j, 0.25, -0.5 + 0.3j]), st.sampled_from([0.6, 1.0]))
def test_pullback_functoriality(c, t):
    p = Poly.quadratic(c)
    h = 0.02
    U0 = equipotential_region(p, t, h)
    U1 = pullback_component(p, U0, 0j)
    ref = Region(U1.grid, _resample(equipotential_region(p, t / 2, h), U1.grid))
    # conservative interior test costs about Lip*h/|p'| extra; allow a few cells
    assert _hausdorff_cells(U1, ref) <= 4


@pytest.mark.parametrize("coeffs,R,d", [((0, 0, 1), 4.0, 2), ((0, 0, 0, 1), 8.0, 3)])
def test_pl_degree_of_power_maps(coeffs, R, d):
    p = Poly(coeffs)
    U0 = disk_region(0j, R, 0.04)
    U1 = pullback_component(p, U0, 0j)
    assert pl_degree(p, U1, U0) == d
    assert len(critical_points_in(p, U1)) == d - 1


def test_pl_degree_one_near_repelling_fixed_point():
    p = Poly((0, 0, 1))
    U0 = disk_region(1 + 0j, 0.2, 0.002)
    U1 = pullback_component(p, U0, 1 + 0j)
    # preimage-count oracle: each generic point of U0 has exactly one square root in U1
    rng = np.random.default_rng(3)
    w = 1 + 0.15 * np.sqrt(rng.uniform(0, 1, 20)) * np.exp(2j * np.pi * rng.uniform(0, 1, 20))
    for s in w:
        roots = np.array([np.sqrt(s), -np.sqrt(s)])
        assert U1.contains(roots).sum() <= 1
    assert pl_degree(p, U1, U0) == 1
    assert not critical_points_in(p, U1)


@pytest.mark.parametrize("c", [-1.0, -0.12 + 0.75j])
def test_refinement_keeps_degree_and_margin(c):
    p = Poly.quadratic(c)
    res = []
    for h in (0.02, 0.01):
        pl = build_pl_restriction(p, equipotential_region(p, 1.0, h), 0j)
        res.append((pl.degree, pl.margin, h))
    assert res[0][0] == res[1][0] == 2
    assert abs(res[0][1] - res[1][1]) < 2 * res[0][2]


def test_restriction_margin_and_riemann_hurwitz(basilica):
    pl = build_pl_restriction(basilica, equipotential_region(basilica, 1.0, 0.01), 0j)
    assert pl.margin > 2 * pl.h
    assert containment_margin(pl.U1, pl.U0) == pytest.approx(pl.margin)
    assert len(critical_points_in(basilica, pl.U1)) == pl.degree - 1


def test_core_component_two_resolutions(basilica):
    cut = common_landing(basilica, "1/3", "2/3")
    v = complex(cut.vertex)
    cores = [core_component(cut, disk_region(v, 2.0, h)) for h in (0.02, 0.01)]
    assert all(c.region.n_cells > 0 for c in cores)
    coarse, fine = cores
    fine_on_coarse = Region(coarse.region.grid, _resample(fine.region, coarse.region.grid))
    assert _hausdorff_cells(coarse.region, fine_on_coarse) <= 2
    # adjacent to both rays near the vertex
    for tr in (cut.traceR, cut.traceL):
        pts = np.array(tr.points)
        near = pts[(np.abs(pts - v) > 0.05) & (np.abs(pts - v) < 0.3)]
        d = np.min(np.abs(fine.region.cell_centers()[:, None] - near[None, :]), axis=0)
        # cells on the cut curve itself are excluded, so allow a few cells of gap
        assert d.min() < 4 * 0.01


def test_core_component_rejects_vertex_on_boundary(basilica):
    cut = common_landing(basilica, "1/3", "2/3")
    v = complex(cut.vertex)
    U = disk_region(v + 0.5, 0.5, 0.01)
    with pytest.raises(PreconditionError):
        core_component(cut, U)


def test_core_component_of_degenerate_cut_is_empty(basilica):
    from plbounds.angles import Angle, CombCut
    from plbounds.rays import GeoCut
    cut = common_landing(basilica, "1/3", "2/3")
    degen = GeoCut(CombCut(Angle(1, 3), Angle(1, 3)), cut.traceR, cut.traceR, cut.traceR.landing)
    assert core_component(degen, disk_region(0j, 2.0, 0.05)).region.empty


def test_paralegal_overlapping_wedges(basilica):
    cut = common_landing(basilica, "1/3", "2/3")
    v = paralegal_check(basilica, [cut, cut], disk_region(0j, 2.0, 0.05))
    assert v.status == "not_paralegal(wedges)"


def test_paralegal_critical_point_in_core():
    # a map whose critical point -1.2 sits inside the wedge of the basilica cut
    p = Poly.quadratic(-1)
    cut = common_landing(p, "1/3", "2/3")
    q = Poly((0.0, 2 * 1.2, 1.0))
    assert point_in_wedge(cut, -1.2 + 0j)
    v = paralegal_check(q, [cut], disk_region(complex(cut.vertex), 1.5, 0.02))
    assert v.status == "not_paralegal(critical)"
