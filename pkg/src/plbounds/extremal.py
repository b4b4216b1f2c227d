"""Two-sided brackets for conformal moduli and extremal lengths of raster
domains, and a property harness for the parallel, series and Grötzsch laws.

Each bracket comes from a dual pair of discrete energy problems on the
union of closed cells, split into right triangles so that piecewise linear
functions have exactly the edge energy

    E(v) = sum_edges w_e (v_b - v_a - J_e)^2

with w = hy/(2 hx) per cell on horizontal edges and hx/(2 hy) on vertical
ones. Any such function is admissible for the continuous problem, so its
energy bounds the continuum minimum from above whatever the solver
accuracy. For an annulus the potential problem (0 on the inner boundary, 1
on the outer) gives 1/E <= mod, and the conjugate problem (free boundary,
unit jump across a cut from the hole) gives mod <= E. Quadrilaterals work
the same way with marked and complementary boundary arcs.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pyamg
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import NotAnAnnulusError, PreconditionError, RegionError
from .parallel import ordered_map
from .regions import FOUR, Grid, Region

DIRECT_MAX_NODES = 40000
SOLVER_TOL = 1e-11
INFLATION_CONSTANT = 4.0

# pyamg draws spectral-radius start vectors from the global numpy RNG
_AMG_SETUP_LOCK = threading.Lock()


@dataclass(frozen=True)
class ModulusEstimate:
    lower: float
    upper: float
    h: float
    method: str = "fem-dual"
    inflation: float = 0.0
    carrier_hash: str = ""

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper):
            raise RegionError(f"invalid bracket [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def reciprocal(self) -> "ModulusEstimate":
        """Bracket of 1/x (extremal length <-> modulus)."""
        lo = 1.0 / self.upper if self.upper > 0 else math.inf
        hi = 1.0 / self.lower if self.lower > 0 else math.inf
        return ModulusEstimate(lo, hi, self.h, self.method, self.inflation, self.carrier_hash)

    def to_json(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "h": self.h, "method": self.method,
                "inflation": self.inflation, "carrier_hash": self.carrier_hash}


# -- discrete energy -------------------------------------------------------

@dataclass
class _Mesh:
    nodes: np.ndarray        # global node ids in use, sorted
    a: np.ndarray            # edge endpoints, compact indices
    b: np.ndarray
    w: np.ndarray
    vertical: np.ndarray     # bool, edge along the y direction
    row_a: np.ndarray        # grid row / col of endpoint a (unwrapped)
    col_a: np.ndarray
    grid: Grid

    @property
    def n(self) -> int:
        return self.nodes.size


def _node_id(grid: Grid, r, c):
    if grid.periodic:
        r = np.mod(r, grid.ny)
    return r * (grid.nx + 1) + c


def _build_mesh(region: Region) -> _Mesh:
    g = region.grid
    ii, jj = np.nonzero(region.mask)
    wh = g.hy / (2 * g.hx)
    wv = g.hx / (2 * g.hy)
    # bottom, top, left, right edges of every included cell
    ra = np.concatenate([ii, ii + 1, ii, ii])
    ca = np.concatenate([jj, jj, jj, jj + 1])
    rb = np.concatenate([ii, ii + 1, ii + 1, ii + 1])
    cb = np.concatenate([jj + 1, jj + 1, jj, jj + 1])
    vert = np.concatenate([np.zeros(2 * ii.size, bool), np.ones(2 * ii.size, bool)])
    w = np.where(vert, wv, wh)
    ga = _node_id(g, ra, ca)
    gb = _node_id(g, rb, cb)
    nodes, inv = np.unique(np.concatenate([ga, gb]), return_inverse=True)
    m = ga.size
    return _Mesh(nodes, inv[:m], inv[m:], w, vert, ra, ca, g)


def _laplacian(mesh: _Mesh, jump: Optional[np.ndarray] = None):
    n = mesh.n
    a, b, w = mesh.a, mesh.b, mesh.w
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([w, w, -w, -w])
    L = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    L.sum_duplicates()
    rhs = np.zeros(n)
    if jump is not None:
        np.add.at(rhs, b, w * jump)
        np.add.at(rhs, a, -w * jump)
    return L, rhs


def energy(mesh: _Mesh, v: np.ndarray, jump: Optional[np.ndarray] = None) -> float:
    d = v[mesh.b] - v[mesh.a]
    if jump is not None:
        d = d - jump
    # fixed summation order keeps results reproducible
    return float(np.sum(mesh.w * d * d))


def _amg_hierarchy(A):
    """Multigrid setup with a fixed seed, so solves are reproducible bit for bit."""
    with _AMG_SETUP_LOCK:
        state = np.random.get_state()
        np.random.seed(0)
        try:
            return pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500)
        finally:
            np.random.set_state(state)


def _solve(L, rhs, fixed: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Minimize the quadratic form with the given nodes held fixed."""
    n = L.shape[0]
    v = np.zeros(n)
    v[fixed] = values
    free = np.ones(n, dtype=bool)
    free[fixed] = False
    if not free.any():
        return v
    Lff = L[free][:, free].tocsr()
    r = rhs[free] - L[free][:, fixed] @ values
    if Lff.shape[0] <= DIRECT_MAX_NODES:
        x = spsolve(Lff.tocsc(), r)
    else:
        ml = _amg_hierarchy(Lff)
        x = ml.solve(r, tol=SOLVER_TOL, accel="cg", maxiter=500)
    v[free] = x
    return v


def _touching(lab: np.ndarray, k: int, periodic: bool) -> np.ndarray:
    """Nodes (ny+1, nx+1) that are corners of a padded complement cell with label k."""
    m = lab == k
    if periodic:
        # rows are not padded: add the wrapped row so node row ny sees row 0
        m = np.vstack([m[-1:], m, m[:1]])
    return m[:-1, :-1] | m[:-1, 1:] | m[1:, :-1] | m[1:, 1:]


def _node_flags(mesh: _Mesh, node_mask: np.ndarray) -> np.ndarray:
    """Compact-index boolean from a (ny+1, nx+1) node mask."""
    g = mesh.grid
    if g.periodic:
        wrapped = node_mask[:-1].copy()
        wrapped[0] |= node_mask[-1]
        node_mask = wrapped
    return node_mask.ravel()[mesh.nodes]


def _inflation(region: Region) -> float:
    if region.boundary_exact:
        return 0.0
    return INFLATION_CONSTANT * region.h * region.perimeter() / region.area()


def _apply_inflation(lo: float, hi: float, delta: float):
    return max(0.0, lo * (1.0 - delta)), hi * (1.0 + delta)


# -- annuli ------------------------------------------------------------------

def _annulus_topology(A: Region):
    if A.empty:
        raise NotAnAnnulusError("empty region")
    _, ncomp = A.components(8)
    if ncomp != 1:
        raise NotAnAnnulusError(f"region has {ncomp} components")
    lab, nc, outer, inner = A.complement_components()
    if A.grid.periodic:
        if nc != 2 or inner == outer:
            raise NotAnAnnulusError(f"complement has {nc} components, expected 2")
        return lab, inner, outer
    if nc != 2:
        raise NotAnAnnulusError(f"complement has {nc} components, expected 2")
    inner = 1 if outer == 2 else 2
    return lab, inner, outer


def annulus_modulus(A: Region) -> ModulusEstimate:
    """Bracket for the conformal modulus of a raster annulus."""
    mesh = _build_mesh(A)
    g = A.grid
    lab, inner, outer = _annulus_topology(A)
    touch_in = _touching(lab, inner, g.periodic)
    touch_out = _touching(lab, outer, g.periodic)
    fin = _node_flags(mesh, touch_in)
    fout = _node_flags(mesh, touch_out)
    if np.any(fin & fout):
        raise NotAnAnnulusError("inner and outer boundaries touch at this resolution")
    if not fin.any() or not fout.any():
        raise NotAnAnnulusError("missing boundary component")

    L, _ = _laplacian(mesh)
    fixed = np.flatnonzero(fin | fout)
    u = _solve(L, np.zeros(mesh.n), fixed, fout[fixed].astype(float))
    e_u = energy(mesh, u)

    jump = _cut_jump(mesh, lab, inner, touch_in)
    Lj, rhs = _laplacian(mesh, jump)
    v = _solve(Lj, rhs, np.array([0]), np.array([0.0]))
    e_v = energy(mesh, v, jump)

    lo, hi = 1.0 / e_u, e_v
    delta = _inflation(A)
    lo, hi = _apply_inflation(lo, hi, delta)
    return ModulusEstimate(min(lo, hi), max(lo, hi), A.h, "fem-dual", delta, A.digest())


def _cut_jump(mesh: _Mesh, lab, inner, touch_in) -> np.ndarray:
    """Unit jump across a half-line leaving the hole.

    Log-polar grids cut along the angular seam. Cartesian grids cut along
    the node row of a node interior to the hole, rightwards.
    """
    g = mesh.grid
    if g.periodic:
        return (mesh.vertical & (mesh.row_a == g.ny - 1)).astype(float)
    hole = lab == inner
    interior = hole[:-1, :-1] & hole[:-1, 1:] & hole[1:, :-1] & hole[1:, 1:]
    rs, cs = np.nonzero(interior)
    if rs.size == 0:
        raise NotAnAnnulusError("hole has no interior node; refine the grid")
    k = np.lexsort((cs, rs))[rs.size // 2]
    r0, c0 = rs[k], cs[k]
    return (mesh.vertical & (mesh.row_a == r0 - 1) & (mesh.col_a > c0)).astype(float)


# -- quadrilaterals ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CurveFamilySpec:
    """A curve family on a raster carrier.

    kind is one of ``annulus_circ``, ``annulus_join`` or ``quad``. For quads,
    ``marked_arcs`` holds two predicates on complex boundary points selecting
    the arcs the curves must join.
    """

    carrier: Region
    kind: str
    marked_arcs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("annulus_circ", "annulus_join", "quad"):
            raise PreconditionError(f"unknown curve family kind {self.kind!r}")
        if self.kind == "quad" and len(self.marked_arcs) != 2:
            raise PreconditionError("a quad needs exactly two marked arcs")


def boundary_loop(region: Region) -> np.ndarray:
    """Global node ids of the outer boundary, in cyclic order."""
    g = region.grid
    m = np.pad(region.mask, 1)
    # horizontal boundary edges between node (r, c) and (r, c+1)
    hb = m[:-1, 1:-1] != m[1:, 1:-1]
    vb = m[1:-1, :-1] != m[1:-1, 1:]
    adj = {}

    def link(p, q):
        adj.setdefault(p, []).append(q)
        adj.setdefault(q, []).append(p)

    for r, c in zip(*np.nonzero(hb)):
        link((r, c), (r, c + 1))
    for r, c in zip(*np.nonzero(vb)):
        link((r, c), (r + 1, c))
    if any(len(v) != 2 for v in adj.values()):
        raise RegionError("pinched raster boundary; refine or smooth the carrier")
    start = min(adj)
    loop = [start]
    prev, cur = None, start
    while True:
        nxt = [q for q in adj[cur] if q != prev]
        q = nxt[0] if prev is not None else max(adj[cur])
        if q == start:
            break
        loop.append(q)
        prev, cur = cur, q
        if len(loop) > len(adj):
            raise RegionError("boundary is not a single closed loop")
    if len(loop) != len(adj):
        raise RegionError("carrier is not simply connected")
    rc = np.array(loop)
    return _node_id(g, rc[:, 0], rc[:, 1])


def _runs(flags: np.ndarray):
    """Cyclic runs of True as lists of positions."""
    n = flags.size
    if flags.all():
        return [list(range(n))]
    start = int(np.flatnonzero(~flags)[0])
    runs, cur = [], []
    for k in range(1, n + 1):
        i = (start + k) % n
        if flags[i]:
            cur.append(i)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def quad_arcs(spec: CurveFamilySpec):
    """Closed boundary node arcs (A, B, C, D) with A, B marked and C, D complementary."""
    region = spec.carrier
    loop = boundary_loop(region)
    g = region.grid
    r, c = np.divmod(loop, g.nx + 1)
    z = g.to_plane(g.x0 + c * g.hx, g.y0 + r * g.hy)
    fa = np.asarray(spec.marked_arcs[0](z), dtype=bool)
    fb = np.asarray(spec.marked_arcs[1](z), dtype=bool)
    if np.any(fa & fb):
        raise PreconditionError("marked arcs overlap")
    ra, rb = _runs(fa), _runs(fb)
    if len(ra) != 1 or len(rb) != 1:
        raise PreconditionError("each marked arc must be a single boundary run")
    rest = _runs(~(fa | fb))
    if len(rest) != 2:
        raise PreconditionError("marked arcs touch; the complementary arcs are degenerate")
    n = loop.size
    comp = [[(run[0] - 1) % n] + run + [(run[-1] + 1) % n] for run in rest]
    return loop[ra[0]], loop[rb[0]], loop[comp[0]], loop[comp[1]]


def _dirichlet_energy(mesh: _Mesh, zero_ids, one_ids) -> float:
    pos = {int(k): i for i, k in enumerate(mesh.nodes)}
    z = np.array([pos[int(k)] for k in zero_ids])
    o = np.array([pos[int(k)] for k in one_ids])
    L, _ = _laplacian(mesh)
    fixed = np.concatenate([z, o])
    vals = np.concatenate([np.zeros(z.size), np.ones(o.size)])
    fixed, idx = np.unique(fixed, return_index=True)
    if fixed.size != z.size + o.size:
        raise PreconditionError("an arc endpoint is shared between the two boundary conditions")
    u = _solve(L, np.zeros(mesh.n), fixed, vals[idx])
    return energy(mesh, u)


def quad_extremal_length(spec: CurveFamilySpec) -> ModulusEstimate:
    """Bracket for the extremal length of curves joining the two marked arcs."""
    if spec.kind != "quad":
        raise PreconditionError("quad_extremal_length needs kind='quad'")
    region = spec.carrier
    if not region.is_jordan_disk():
        raise PreconditionError("the carrier must be a simply connected raster domain")
    A, B, C, D = quad_arcs(spec)
    mesh = _build_mesh(region)
    e_u = _dirichlet_energy(mesh, A, B)
    e_v = _dirichlet_energy(mesh, C, D)
    lo, hi = 1.0 / e_u, e_v
    delta = _inflation(region)
    lo, hi = _apply_inflation(lo, hi, delta)
    return ModulusEstimate(min(lo, hi), max(lo, hi), region.h, "fem-dual", delta, region.digest())


def family_estimate(spec: CurveFamilySpec) -> ModulusEstimate:
    """Extremal length of the family: EL(joining) = 1/mod, EL(circular) = mod."""
    if spec.kind == "quad":
        return quad_extremal_length(spec)
    m = annulus_modulus(spec.carrier)
    return m.reciprocal() if spec.kind == "annulus_join" else m


# -- reference carriers ----------------------------------------------------------

def round_annulus(r1: float, r2: float, n_radial: int = 64, n_angular: int = 256,
                  center: complex = 0j) -> Region:
    """Exact round annulus on a log-polar grid."""
    if not 0 < r1 < r2:
        raise PreconditionError("need 0 < r1 < r2")
    g = Grid.logpolar(center, r1, r2, n_radial, n_angular)
    return Region(g, np.ones(g.shape, bool), True, "round annulus")


def round_annulus_cartesian(r1: float, r2: float, h: float, center: complex = 0j) -> Region:
    g = Grid.box(center, r2 + 2 * h, h)
    d = np.abs(g.centers() - center)
    return Region(g, (d > r1) & (d < r2), False, "round annulus (cartesian)")


def rectangle_quad(width: float, height: float, cells_per_unit: int = 32,
                   join: str = "horizontal", origin: complex = 0j) -> CurveFamilySpec:
    """Rectangle quad joining its left and right sides (or bottom and top)."""
    g = Grid.rect(origin.real, origin.real + width, origin.imag, origin.imag + height,
                  1.0 / cells_per_unit)
    reg = Region(g, np.ones(g.shape, bool), True, f"rectangle {width}x{height}")
    eps = 1e-9 * max(width, height)
    x0, x1 = origin.real, origin.real + width
    y0, y1 = origin.imag, origin.imag + height
    if join == "horizontal":
        arcs = (lambda z: np.abs(np.asarray(z).real - x0) < eps,
                lambda z: np.abs(np.asarray(z).real - x1) < eps)
    elif join == "vertical":
        arcs = (lambda z: np.abs(np.asarray(z).imag - y0) < eps,
                lambda z: np.abs(np.asarray(z).imag - y1) < eps)
    else:
        raise PreconditionError("join must be 'horizontal' or 'vertical'")
    return CurveFamilySpec(reg, "quad", arcs)


def l_hexomino_quad(cells_per_unit: int = 16) -> CurveFamilySpec:
    """L-shaped hexomino: a 1x4 column with a 2x1 foot to the right.

    Curves join the top of the column to the right end of the foot.
    """
    g = Grid.rect(0.0, 3.0, 0.0, 4.0, 1.0 / cells_per_unit)
    c = g.centers()
    mask = (c.real < 1.0) | (c.imag < 1.0)
    reg = Region(g, mask, True, "L hexomino")
    eps = 1e-9
    arcs = (lambda z: np.abs(np.asarray(z).imag - 4.0) < eps,
            lambda z: np.abs(np.asarray(z).real - 3.0) < eps)
    return CurveFamilySpec(reg, "quad", arcs)


# -- summation trick -------------------------------------------------------------

def harmonic_sum_bound(ell: float, ells: Sequence[float], tol: float = 1e-12) -> bool:
    """Check sum(ells) >= m^2 ell for ells whose reciprocals sum to 1/ell.

    Uses 1/0 = inf and 1/inf = 0.
    """
    ells = [float(x) for x in ells]
    m = len(ells)
    if m == 0:
        raise PreconditionError("need at least one length")
    if ell < 0 or any(x < 0 or math.isnan(x) for x in ells):
        raise PreconditionError("lengths must be nonnegative")
    inv = sum(math.inf if x == 0 else 1.0 / x for x in ells)
    if ell == 0:
        if inv != math.inf:
            raise PreconditionError("ell = 0 needs some zero term (1/0 = inf)")
    else:
        target = 1.0 / ell
        if not abs(inv - target) <= tol * max(1.0, target):
            raise PreconditionError(f"reciprocal sum {inv!r} differs from 1/ell = {target!r}")
    total = math.fsum(ells)
    return total >= m * m * ell - tol * max(1.0, m * m * ell)


# -- law harness -------------------------------------------------------------------

@dataclass
class HarnessReport:
    configs: int = 0
    violations: int = 0
    max_violation: float = 0.0
    tolerance: float = 0.02
    records: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"configs": self.configs, "violations": self.violations,
                "max_violation": self.max_violation, "tolerance": self.tolerance,
                "records": self.records}


def _frac_cuts(rng, k: int, n: int):
    """k + 1 sorted integer breakpoints in [0, n], at least one cell apart."""
    inner = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
    return np.concatenate([[0], inner, [n]])


def _parallel_config(rng, cells: int):
    k = int(rng.integers(2, 5))
    n = 4 * k
    W = int(rng.integers(2, 6)) / 4.0
    cuts = _frac_cuts(rng, k, n)
    cells = max(cells, 2 * n)
    total = quad_extremal_length(rectangle_quad(W, 1.0, cells, "horizontal"))
    parts = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        # keep a random gap so the strips need not fill the rectangle
        top = hi - (1 if (hi - lo) > 1 and rng.random() < 0.5 else 0)
        Hs = (top - lo) / n
        parts.append(quad_extremal_length(rectangle_quad(W, Hs, cells, "horizontal",
                                                         origin=1j * lo / n)))
    # 1/EL(whole) >= sum 1/EL(part)
    lhs = sum(1.0 / p.upper for p in parts)
    rhs = 1.0 / total.lower
    return "parallel", (lhs - rhs) / rhs


def _series_config(rng, cells: int):
    k = int(rng.integers(2, 5))
    n = 4 * k
    H = int(rng.integers(2, 6)) / 4.0
    cuts = _frac_cuts(rng, k, n)
    cells = max(cells, 2 * n)
    total = quad_extremal_length(rectangle_quad(1.0, H, cells, "horizontal"))
    parts = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        right = hi - (1 if (hi - lo) > 1 and rng.random() < 0.5 else 0)
        parts.append(quad_extremal_length(rectangle_quad((right - lo) / n, H, cells, "horizontal",
                                                         origin=lo / n)))
    # EL(whole) >= sum EL(part)
    lhs = sum(p.lower for p in parts)
    rhs = total.upper
    return "series", (lhs - rhs) / rhs


def _grotzsch_config(rng, cells: int):
    k = int(rng.integers(1, 4))
    L = float(rng.uniform(1.0, 4.0))
    n = 8 * k
    cuts = _frac_cuts(rng, k, n) if k > 1 else np.array([0, n])
    total = annulus_modulus(round_annulus(1.0, math.exp(L), cells, 4 * cells))
    parts = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        top = hi - (1 if (hi - lo) > 1 and rng.random() < 0.5 else 0)
        r1, r2 = math.exp(L * lo / n), math.exp(L * top / n)
        parts.append(annulus_modulus(round_annulus(r1, r2, cells, 4 * cells)))
    lhs = sum(p.lower for p in parts)
    rhs = total.upper
    return "grotzsch", (lhs - rhs) / rhs


def el_law_harness(n_configs: int = 100, seed: int = 0, cells: int = 16,
                   tolerance: float = 0.02, workers: int = 1) -> HarnessReport:
    """Random parallel, series and Grötzsch configurations; violations are reported.

    Each configuration draws from its own generator seeded by (seed, index),
    so the report does not depend on the worker count.
    """
    makers = (_parallel_config, _series_config, _grotzsch_config)

    def one(k):
        return makers[k % 3](np.random.default_rng([seed, k]), cells)

    report = HarnessReport(tolerance=tolerance)
    for kind, excess in ordered_map(one, range(n_configs), workers):
        report.configs += 1
        report.max_violation = max(report.max_violation, excess)
        if excess > tolerance:
            report.violations += 1
        report.records.append({"kind": kind, "excess": excess})
    return report
