"""Rasterized planar domains: equipotential and wedge-truncated regions,
pullback components, polynomial-like restrictions, core components and the
paralegal check.

A region is a boolean mask over a rectangular grid of cells; the domain it
represents is the union of the closed cells. Cartesian grids map cell
(row i, column j) to the square with lower-left corner
``x0 + j*hx + 1j*(y0 + i*hy)``. Log-polar grids use ``x = log|z - center|``
and ``y = arg(z - center)`` with the angle periodic.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from matplotlib.path import Path as MplPath
from PIL import Image
from scipy import ndimage
from skimage import measure

from .angles import wedges_pairwise_disjoint
from .errors import BudgetExceededError, PreconditionError, RegionError
from .poly import Poly, critical_points, eval_poly, green_potential_grid, poly_roots

LIP_SAFETY = 1.25
FOUR = ndimage.generate_binary_structure(2, 1)
EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class Grid:
    x0: float
    y0: float
    hx: float
    hy: float
    nx: int
    ny: int
    kind: str = "cartesian"
    center: complex = 0j

    def __post_init__(self):
        if self.kind not in ("cartesian", "logpolar"):
            raise PreconditionError(f"unknown grid kind {self.kind!r}")
        if self.hx <= 0 or self.hy <= 0 or self.nx < 1 or self.ny < 1:
            raise PreconditionError("grid needs positive cell sizes and counts")
        if self.kind == "logpolar" and abs(self.ny * self.hy - 2 * math.pi) > 1e-9:
            raise PreconditionError("log-polar grids must cover the full angle")

    @classmethod
    def box(cls, center: complex, radius: float, h: float) -> "Grid":
        """Square cartesian grid of side at least 2*radius centred at center."""
        n = max(1, int(math.ceil(2 * radius / h)))
        half = n * h / 2
        return cls(center.real - half, center.imag - half, h, h, n, n)

    @classmethod
    def rect(cls, xmin: float, xmax: float, ymin: float, ymax: float, h: float) -> "Grid":
        nx = max(1, int(round((xmax - xmin) / h)))
        ny = max(1, int(round((ymax - ymin) / h)))
        return cls(xmin, ymin, (xmax - xmin) / nx, (ymax - ymin) / ny, nx, ny)

    @classmethod
    def logpolar(cls, center: complex, r1: float, r2: float, n_radial: int,
                 n_angular: int) -> "Grid":
        s1, s2 = math.log(r1), math.log(r2)
        return cls(s1, 0.0, (s2 - s1) / n_radial, 2 * math.pi / n_angular,
                   n_radial, n_angular, "logpolar", complex(center))

    @property
    def periodic(self) -> bool:
        return self.kind == "logpolar"

    @property
    def shape(self):
        return (self.ny, self.nx)

    def to_plane(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "cartesian":
            return x + 1j * y
        return self.center + np.exp(x + 1j * y)

    def from_plane(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "cartesian":
            return z.real, z.imag
        w = z - self.center
        with np.errstate(divide="ignore"):
            return np.log(np.abs(w)), np.mod(np.angle(w), 2 * math.pi)

    def centers(self) -> np.ndarray:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.hx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.hy
        X, Y = np.meshgrid(xs, ys)
        return self.to_plane(X, Y)

    def nodes(self) -> np.ndarray:
        """Plane coordinates of the (ny+1, nx+1) cell corners."""
        xs = self.x0 + np.arange(self.nx + 1) * self.hx
        ys = self.y0 + np.arange(self.ny + 1) * self.hy
        X, Y = np.meshgrid(xs, ys)
        return self.to_plane(X, Y)

    def locate(self, z):
        """Return (row, col, valid) of the cells containing the points z."""
        x, y = self.from_plane(z)
        j = np.floor((x - self.x0) / self.hx)
        i = np.floor((y - self.y0) / self.hy)
        if self.periodic:
            i = np.mod(i, self.ny)
        ok = np.isfinite(j) & np.isfinite(i) & (j >= 0) & (j < self.nx) & (i >= 0) & (i < self.ny)
        i = np.where(ok, i, 0).astype(np.int64)
        j = np.where(ok, j, 0).astype(np.int64)
        return i, j, ok

    @property
    def h(self) -> float:
        """Plane cell size (the largest cell diameter side for log-polar)."""
        if self.kind == "cartesian":
            return max(self.hx, self.hy)
        r_max = math.exp(self.x0 + self.nx * self.hx)
        return r_max * max(self.hy, math.expm1(self.hx))

    def to_json(self) -> dict:
        return {"kind": self.kind, "x0": self.x0, "y0": self.y0, "hx": self.hx,
                "hy": self.hy, "nx": self.nx, "ny": self.ny,
                "center": [self.center.real, self.center.imag]}

    @classmethod
    def from_json(cls, d) -> "Grid":
        return cls(d["x0"], d["y0"], d["hx"], d["hy"], d["nx"], d["ny"], d["kind"],
                   complex(*d["center"]))


@dataclass(frozen=True, eq=False)
class Region:
    """A union of closed grid cells.

    ``boundary_exact`` records that the mask reproduces the intended domain
    exactly (grid-aligned shapes), so no raster inflation is needed.
    """

    grid: Grid
    mask: np.ndarray
    boundary_exact: bool = False
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            raise PreconditionError(f"mask shape {m.shape} does not match grid {self.grid.shape}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    def with_mask(self, mask, label: str = "", exact: bool = False) -> "Region":
        return Region(self.grid, mask, exact, label or self.label)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def area(self) -> float:
        g = self.grid
        if g.kind == "cartesian":
            return self.n_cells * g.hx * g.hy
        s = g.x0 + np.arange(g.nx) * g.hx
        ring = 0.5 * (np.exp(2 * (s + g.hx)) - np.exp(2 * s)) * g.hy
        return float((self.mask * ring[None, :]).sum())

    def contains(self, z):
        i, j, ok = self.grid.locate(z)
        return ok & self.mask[i, j]

    def cell_centers(self) -> np.ndarray:
        return self.grid.centers()[self.mask]

    def components(self, connectivity: int = 4):
        labels, n = ndimage.label(self.mask, FOUR if connectivity == 4 else EIGHT)
        if self.grid.periodic and n > 1:
            labels, n = _merge_periodic(labels, self.mask, connectivity)
        return labels, n

    def complement_components(self):
        """Labels of the complement of the closed-cell union, outside padded.

        Returns (labels of the padded complement, count, unbounded label,
        centre label). The centre label is only set for log-polar grids,
        where the left pad surrounds the centre.
        """
        if self.grid.periodic:
            inv = np.pad(~self.mask, ((0, 0), (1, 1)), constant_values=True)
            lab, n = ndimage.label(inv, FOUR)
            lab, n = _merge_periodic(lab, inv, 4)
            return lab, n, lab[0, -1], lab[0, 0]
        inv = np.pad(~self.mask, 1, constant_values=True)
        lab, n = ndimage.label(inv, FOUR)
        return lab, n, lab[0, 0], None

    def is_jordan_disk(self) -> bool:
        if self.empty:
            return False
        _, n = self.components(4)
        if n != 1:
            return False
        _, nc, _, _ = self.complement_components()
        return nc == 1

    def distance_inside(self) -> np.ndarray:
        """Distance from each cell centre to the nearest excluded cell centre (plane units)."""
        if self.grid.kind != "cartesian" or abs(self.grid.hx - self.grid.hy) > 1e-12 * self.grid.hx:
            raise PreconditionError("distance maps need a square cartesian grid")
        d = ndimage.distance_transform_edt(np.pad(self.mask, 1))[1:-1, 1:-1]
        return d * self.grid.hx

    def boundary(self) -> list:
        """Closed boundary polylines (complex arrays) by marching squares."""
        g = self.grid
        padded = np.pad(self.mask.astype(float), 1)
        out = []
        for c in measure.find_contours(padded, 0.5):
            # contour coordinates are in padded cell-centre index units
            x = g.x0 + (c[:, 1] - 0.5) * g.hx
            y = g.y0 + (c[:, 0] - 0.5) * g.hy
            out.append(g.to_plane(x, y))
        return out

    def perimeter(self) -> float:
        return float(sum(np.abs(np.diff(b)).sum() for b in self.boundary()))

    def diameter_bound(self) -> float:
        z = self.cell_centers()
        if z.size == 0:
            return 0.0
        return float(math.hypot(np.ptp(z.real), np.ptp(z.imag)) + 2 * self.h)

    def dilate(self, eps: float) -> "Region":
        r = int(math.ceil(eps / self.grid.hx))
        if r <= 0:
            return self
        outside = ~np.pad(self.mask, r)
        d = ndimage.distance_transform_edt(outside)[r:-r, r:-r]
        return self.with_mask(d <= eps / self.grid.hx + 1e-9)

    def erode(self, eps: float) -> "Region":
        return self.with_mask(self.distance_inside() > eps)

    def component_at(self, z: complex, connectivity: int = 4) -> "Region":
        i, j, ok = self.grid.locate(np.array([z]))
        if not ok[0] or not self.mask[i[0], j[0]]:
            raise RegionError(f"point {z} is not in the region")
        labels, _ = self.components(connectivity)
        return self.with_mask(labels == labels[i[0], j[0]])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.grid.to_json(), sort_keys=True).encode())
        h.update(np.packbits(self.mask).tobytes())
        return h.hexdigest()

    def to_png_bytes(self) -> bytes:
        """8-bit grayscale PNG, row 0 at the top: 255 inside, 0 outside."""
        img = Image.fromarray(np.where(self.mask[::-1], 255, 0).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG", optimize=False)
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"grid": self.grid.to_json(), "boundary_exact": self.boundary_exact,
                "label": self.label, "cells": self.n_cells, "digest": self.digest()}

    def save(self, stem) -> None:
        stem = str(stem)
        with open(stem + ".png", "wb") as fh:
            fh.write(self.to_png_bytes())
        with open(stem + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, stem) -> "Region":
        stem = str(stem)
        with open(stem + ".json") as fh:
            meta = json.load(fh)
        mask = np.asarray(Image.open(stem + ".png"))[::-1] > 127
        return cls(Grid.from_json(meta["grid"]), mask, meta.get("boundary_exact", False),
                   meta.get("label", ""))

    def boundary_csv(self) -> str:
        lines = ["loop,re,im"]
        for k, b in enumerate(self.boundary()):
            lines.extend(f"{k},{z.real!r},{z.imag!r}" for z in b)
        return "\n".join(lines) + "\n"


def _merge_periodic(labels, mask, connectivity):
    """Identify labels across the periodic top/bottom seam."""
    top, bot = labels[-1], labels[0]
    parent = {}

    def find(a):
        while parent.get(a, a) != a:
            a = parent[a]
        return a

    cols = range(labels.shape[1])
    for j in cols:
        shifts = (0,) if connectivity == 4 else (-1, 0, 1)
        for dj in shifts:
            k = j + dj
            if 0 <= k < labels.shape[1] and top[j] and bot[k]:
                a, b = find(top[j]), find(bot[k])
                if a != b:
                    parent[max(a, b)] = min(a, b)
    if not parent:
        return labels, int(labels.max())
    lut = np.arange(labels.max() + 1)
    for a in range(1, len(lut)):
        lut[a] = find(a)
    uniq, inv = np.unique(lut, return_inverse=True)
    new = inv.reshape(lut.shape)[labels]
    return new, len(uniq) - 1


def disk_region(center: complex, radius: float, h: float, pad: float = 0.0) -> Region:
    g = Grid.box(center, radius + pad + h, h)
    return Region(g, np.abs(g.centers() - center) < radius, label="disk")


def lipschitz_bound(p: Poly, region: Region) -> float:
    """max |p'| over the cell centres of the region, times a safety factor."""
    z = region.cell_centers()
    if z.size == 0:
        return 0.0
    dp = p.derivative()
    return LIP_SAFETY * float(np.max(np.abs(eval_poly(dp, z)))) if p.degree > 0 else 0.0


# -- equipotentials -------------------------------------------------------

def _tight_equipotential(p: Poly, t: float, h: float, shift: complex, radius: float,
                         max_cells: Optional[int] = None):
    """Potential mask on a box shrunk to a coarse estimate of the sublevel set.

    Falls back to the full box when the fine mask reaches the shrunk border.
    """
    full = Grid.box(shift, radius, h)
    hc = radius / 64
    if hc > 4 * h:
        coarse = Grid.box(shift, radius, hc)
        cm = ndimage.binary_dilation(green_potential_grid(p, coarse.centers()) < t + 0.1,
                                     iterations=2)
        ys, xs = np.nonzero(cm)
        if ys.size:
            c = coarse.centers()
            x0 = c[0, xs.min()].real - hc
            y0 = c[ys.min(), 0].imag - hc
            nx = int(math.ceil((c[0, xs.max()].real + hc - x0) / h))
            ny = int(math.ceil((c[ys.max(), 0].imag + hc - y0) / h))
            g = Grid(x0, y0, h, h, nx, ny)
            _check_budget(nx * ny, max_cells)
            mask = green_potential_grid(p, g.centers()) < t
            if not (mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any()):
                return g, mask
    _check_budget(full.nx * full.ny, max_cells)
    return full, green_potential_grid(p, full.centers()) < t


def _check_budget(cells: int, max_cells: Optional[int]):
    if max_cells is not None and cells > max_cells:
        raise BudgetExceededError(f"{cells} cells exceeds the budget of {max_cells}")


def equipotential_region(p: Poly, t: float, h: float, allow_disconnected: bool = False,
                         max_cells: Optional[int] = None) -> Region:
    """Cells whose centre has Green potential below t."""
    if t <= 0:
        raise PreconditionError("t must be positive")
    if h <= 0:
        raise PreconditionError("h must be positive")
    shift = -p.coefficients[-2] / p.degree if p.monic and p.degree > 1 else 0j
    # G(z) >= log|z - shift| - log 2 outside the escape disk
    radius = max(p.escape_radius(), 2.0 * math.exp(t) + abs(shift))
    g, mask = _tight_equipotential(p, t, h, shift, radius, max_cells)
    reg = Region(g, mask, label=f"equipotential t={t!r}")
    if not allow_disconnected:
        _, n = reg.components(4)
        if n != 1:
            raise RegionError(f"equipotential region has {n} components "
                              "(disconnected filled set, or h too coarse for this t)")
    return reg


# -- cuts on the raster ---------------------------------------------------

def _curve_cells(grid: Grid, curve: np.ndarray) -> np.ndarray:
    """Cells met by a polyline, sampled at a quarter of the cell size."""
    hit = np.zeros(grid.shape, dtype=bool)
    step = 0.25 * min(grid.hx, grid.hy) if grid.kind == "cartesian" else 0.25 * grid.h
    for a, b in zip(curve[:-1], curve[1:]):
        n = max(2, int(math.ceil(abs(b - a) / step)) + 1)
        pts = a + (b - a) * np.linspace(0.0, 1.0, n)
        i, j, ok = grid.locate(pts)
        hit[i[ok], j[ok]] = True
    return hit


def cut_polygon(cut, n_arc: int = 256) -> np.ndarray:
    """Closed polygon bounding the wedge of a geometric cut.

    Inward along the R ray, out along the L ray, then back to the start of R
    along a large arc swept through the wedge's external angles.
    """
    rpts = np.asarray(cut.traceR.points, dtype=complex)
    lpts = np.asarray(cut.traceL.points, dtype=complex)
    v = complex(cut.vertex)
    start, length = cut.comb.arc()
    # far out the rays are nearly radial, so arguments are taken about 0
    c = 0j
    aR = math.atan2((rpts[0] - c).imag, (rpts[0] - c).real)
    aL = math.atan2((lpts[0] - c).imag, (lpts[0] - c).real)
    target = 2 * math.pi * float(length)
    sweep = aL - aR
    sweep += 2 * math.pi * round((target - sweep) / (2 * math.pi))
    rad_R, rad_L = abs(rpts[0] - c), abs(lpts[0] - c)
    s = np.linspace(0.0, 1.0, n_arc)[1:-1]
    arc = c + (rad_L + (rad_R - rad_L) * s) * np.exp(1j * (aL - sweep * s))
    return np.concatenate([rpts, [v], lpts[::-1], arc, rpts[:1]])


def _even_odd_fill(rows: np.ndarray, cols: np.ndarray, shape) -> np.ndarray:
    """Even-odd fill of a closed polygon given in index coordinates.

    Each edge crossing a row toggles every cell whose centre lies to its right.
    """
    ny, nx = shape
    r0, r1 = rows, np.roll(rows, -1)
    c0, c1 = cols, np.roll(cols, -1)
    toggles = np.zeros((ny, nx + 1), dtype=np.int32)
    lo = np.ceil(np.minimum(r0, r1)).astype(np.int64)
    hi = np.ceil(np.maximum(r0, r1)).astype(np.int64)  # rows y with min <= y < max
    lo, hi = np.clip(lo, 0, ny), np.clip(hi, 0, ny)
    for k in np.flatnonzero(hi > lo):
        y = np.arange(lo[k], hi[k])
        x = c0[k] + (y - r0[k]) * (c1[k] - c0[k]) / (r1[k] - r0[k])
        j = np.clip(np.ceil(x), 0, nx).astype(np.int64)
        np.add.at(toggles, (y, j), 1)
    return (np.cumsum(toggles, axis=1)[:, :nx] % 2).astype(bool)


def wedge_mask(grid: Grid, cut) -> np.ndarray:
    """Cells whose centre lies strictly inside the wedge of the cut."""
    if cut.degenerate:
        return np.zeros(grid.shape, dtype=bool)
    poly = cut_polygon(cut)
    if grid.kind == "cartesian":
        # scanline fill in index coordinates, where cell (i, j) has its centre at (i, j)
        rows = (poly.imag - grid.y0) / grid.hy - 0.5
        cols = (poly.real - grid.x0) / grid.hx - 0.5
        return _even_odd_fill(rows, cols, grid.shape)
    path = MplPath(np.column_stack([poly.real, poly.imag]))
    c = grid.centers().ravel()
    inside = path.contains_points(np.column_stack([c.real, c.imag]))
    return inside.reshape(grid.shape)


def point_in_wedge(cut, z: complex) -> bool:
    if cut.degenerate:
        return False
    poly = cut_polygon(cut)
    return bool(MplPath(np.column_stack([poly.real, poly.imag])).contains_point((z.real, z.imag)))


def truncate_by_wedges(U: Region, Z: Sequence, clearance: float = 0.0,
                       basepoint: complex = 0j) -> Region:
    """Remove the cut curves and the wedge cells farther than clearance from each vertex.

    Keeps the 4-connected component of the basepoint, together with any
    component that reaches into the clearance disk of a vertex.
    """
    if not Z:
        return U
    mask = U.mask.copy()
    centers = U.grid.centers()
    near = np.zeros(U.grid.shape, dtype=bool)
    for cut in Z:
        if cut.degenerate:
            continue
        if point_in_wedge(cut, basepoint):
            raise PreconditionError(f"basepoint lies in the wedge of cut {cut.comb.to_json()}")
        close = np.abs(centers - cut.vertex) <= clearance
        near |= close
        mask &= ~(wedge_mask(U.grid, cut) & ~close)
        mask &= ~_curve_cells(U.grid, cut.curve())
    labels, _ = ndimage.label(mask, FOUR)
    i, j, ok = U.grid.locate(np.array([basepoint]))
    if not ok[0] or not mask[i[0], j[0]]:
        raise RegionError("truncation disconnected the basepoint from the region")
    keep = set(np.unique(labels[near & mask]).tolist()) | {int(labels[i[0], j[0]])}
    keep.discard(0)
    return U.with_mask(np.isin(labels, sorted(keep)), label="truncated")


# -- pullbacks and degree ---------------------------------------------------

def pullback_component(p: Poly, U0: Region, basepoint: complex,
                       grid: Optional[Grid] = None) -> Region:
    """Component at basepoint of the cells that p maps well inside U0.

    A cell counts when the images of its centre and four corners all lie in
    U0 at depth at least Lip*h, Lip being 1.25 |p'| at the cell centre.
    """
    if not U0.contains(np.array([p(complex(basepoint))]))[0]:
        raise PreconditionError("p(basepoint) is not in U0")
    g = grid or U0.grid
    depth = U0.distance_inside()
    centers = g.centers()
    dp = p.derivative()
    lip = LIP_SAFETY * np.abs(eval_poly(dp, centers))
    need = lip * g.h
    # a point in a cell at depth d (centre to nearest outside centre) is at
    # least d - h from the complement
    ok = np.ones(g.shape, dtype=bool)
    offs = [0.0, -0.5 - 0.5j, 0.5 - 0.5j, 0.5 + 0.5j, -0.5 + 0.5j]
    for o in offs:
        pts = centers + o.real * g.hx + 1j * o.imag * g.hy
        w = eval_poly(p, pts)
        i, j, valid = U0.grid.locate(w)
        d = np.where(valid, depth[i, j] - U0.h, -np.inf)
        ok &= valid & U0.mask[i, j] & (d >= need)
    reg = Region(g, ok, label="pullback")
    try:
        return reg.component_at(basepoint)
    except RegionError:
        raise RegionError("basepoint is not in any pullback component") from None


def _sample_points(region: Region, n: int, seed: int, depth_frac: float = 0.5) -> np.ndarray:
    depth = region.distance_inside()
    deep = depth >= depth_frac * depth.max()
    z = region.grid.centers()[deep & region.mask]
    rng = np.random.default_rng(seed)
    idx = rng.choice(z.size, size=min(n, z.size), replace=False)
    jitter = (rng.random(idx.size) - 0.5 + 1j * (rng.random(idx.size) - 0.5)) * region.h * 0.5
    return z[np.sort(idx)] + jitter


def critical_points_in(p: Poly, region: Region) -> list:
    if p.degree < 2:
        return []
    cps = critical_points(p)
    inside = region.contains(np.array(cps, dtype=complex))
    return [c for c, k in zip(cps, inside) if k]


def pl_degree(p: Poly, U1: Region, U0: Region, n_samples: int = 8, seed: int = 0) -> int:
    """Preimage count in U1 of generic points of U0, cross-checked by Riemann-Hurwitz."""
    ws = _sample_points(U0, n_samples, seed)
    counts = []
    for w in ws:
        roots = poly_roots(Poly((p.coefficients[0] - w,) + p.coefficients[1:]))
        counts.append(int(U1.contains(roots).sum()))
    if len(set(counts)) != 1:
        raise RegionError(f"inconsistent preimage counts {counts}; region too coarse")
    d = counts[0]
    n_crit = len(critical_points_in(p, U1))
    if d >= 1 and n_crit != d - 1:
        raise RegionError(f"degree {d} but {n_crit} critical points in U1")
    return d


@dataclass(frozen=True, eq=False)
class PLRestriction:
    p: Poly
    U0: Region
    U1: Region
    degree: int
    basepoint: complex
    margin: float
    method: str = "equipotential"
    collar_ok: bool = True

    @property
    def h(self) -> float:
        return self.U0.h

    def annulus(self) -> Region:
        """Cells of U0 outside U1; their closed union is U0 minus the closure of U1."""
        return self.U0.with_mask(self.U0.mask & ~self.U1.mask, label="fundamental annulus")

    def to_json(self) -> dict:
        return {"degree": self.degree, "basepoint": [self.basepoint.real, self.basepoint.imag],
                "margin": self.margin, "h": self.h, "method": self.method,
                "U0": self.U0.sidecar(), "U1": self.U1.sidecar(), "collar_ok": self.collar_ok}


def containment_margin(U1: Region, U0: Region) -> float:
    """Lower bound for the distance between the boundaries of U1 and U0."""
    if U1.grid != U0.grid:
        raise PreconditionError("U1 and U0 must share a grid")
    if np.any(U1.mask & ~U0.mask):
        return -math.inf
    depth = U0.distance_inside()
    # closed cells at centre distance d are at least d - sqrt(2) h apart
    return float(depth[U1.mask].min() - math.sqrt(2) * U0.h)


def collar_check(p: Poly, U1: Region, U0: Region) -> bool:
    """Boundary cells of U1 map within 2 h Lip of the eroded boundary of U0.

    The pullback already keeps images Lip*h + h deep, so the collar is
    measured from that level.
    """
    edge = U1.mask & ~ndimage.binary_erosion(U1.mask, FOUR)
    z = U1.grid.centers()[edge]
    w = eval_poly(p, z)
    depth = U0.distance_inside()
    i, j, ok = U0.grid.locate(w)
    d = np.where(ok & U0.mask[i, j], depth[i, j], 0.0)
    lip = lipschitz_bound(p, U1)
    lip = max(lip, 1.0)
    return bool(np.all(d <= 3 * U0.h * lip + U0.h))


def build_pl_restriction(p: Poly, U0: Region, basepoint: complex, method: str = "equipotential",
                         n_samples: int = 8, seed: int = 0) -> PLRestriction:
    U1 = pullback_component(p, U0, basepoint)
    margin = containment_margin(U1, U0)
    if not margin > 2 * U0.h:
        raise RegionError(f"U1 is not compactly inside U0 (margin {margin:.3g}, h {U0.h:.3g})")
    d = pl_degree(p, U1, U0, n_samples, seed)
    if d < 1:
        raise RegionError("no preimages in U1")
    return PLRestriction(p, U0, U1, d, complex(basepoint), margin, method, collar_check(p, U1, U0))


def filled_set(p: Poly, U1: Region, n_iter: int = 64) -> Region:
    """Cells of U1 whose centre orbit stays in U1 for n_iter steps."""
    z = U1.grid.centers()
    alive = U1.mask.copy()
    w = z[alive]
    idx = np.flatnonzero(alive)
    for _ in range(n_iter):
        w = eval_poly(p, w)
        keep = U1.contains(w)
        w, idx = w[keep], idx[keep]
    mask = np.zeros(U1.grid.shape, dtype=bool)
    mask.flat[idx] = True
    return U1.with_mask(mask, label="filled set")


def is_attached(cut, K: Region, p: Poly = None, guard: float = 3.0,
                U1: Optional[Region] = None) -> bool:
    """Vertex in the filled set and no filled-set cell inside the wedge beyond guard*h.

    With p and U1 given, a vertex whose first dozen p-iterates stay in U1 also
    counts as in the filled set: thin spikes of the filled set near a
    repelling vertex are invisible at raster resolution.
    """
    if cut.degenerate:
        return False
    if not K.contains(np.array([cut.vertex]))[0]:
        near = np.abs(K.cell_centers() - cut.vertex).min(initial=math.inf) if not K.empty else math.inf
        if near > 1.5 * K.h and not (p is not None and U1 is not None
                                     and _orbit_stays(p, cut.vertex, U1, 12)):
            return False
    w = wedge_mask(K.grid, cut)
    far = np.abs(K.grid.centers() - cut.vertex) > guard * K.h
    return not np.any(K.mask & w & far)


def _orbit_stays(p: Poly, z: complex, U: Region, n: int) -> bool:
    pts = [complex(z)]
    for _ in range(n):
        pts.append(p(pts[-1]))
    return bool(U.contains(np.array(pts)).all())


# -- core components and paralegality ---------------------------------------

@dataclass(frozen=True, eq=False)
class CoreComponent:
    cut: object
    parent: Region
    region: Region

    def to_json(self):
        return {"cut": self.cut.comb.to_json(), "cells": self.region.n_cells,
                "digest": self.region.digest()}


def _ray_direction(points, vertex, dist):
    pts = np.asarray(points, dtype=complex)
    d = np.abs(pts - vertex)
    k = np.flatnonzero(d >= dist)
    z = pts[k[-1]] if k.size else pts[0]
    u = z - vertex
    return u / abs(u)


def core_component(cut, U: Region) -> CoreComponent:
    """Component of (wedge ∩ U) adjacent to both rays at the vertex."""
    if cut.degenerate:
        return CoreComponent(cut, U, U.with_mask(np.zeros_like(U.mask), label="core"))
    v = complex(cut.vertex)
    h = U.h
    if not U.contains(np.array([v]))[0]:
        raise PreconditionError("the cut vertex is not inside U")
    vi, vj, _ = U.grid.locate(np.array([v]))
    if U.grid.kind == "cartesian" and U.distance_inside()[vi[0], vj[0]] < 2 * h:
        raise PreconditionError("the cut vertex is on the boundary of U")
    dist = 3 * h
    dR = _ray_direction(cut.traceR.points, v, dist)
    dL = _ray_direction(cut.traceL.points, v, dist)
    bis = dR + dL
    bis = bis / abs(bis) if abs(bis) > 1e-12 else 1j * dR
    seed = None
    for cand in (v + dist * bis, v - dist * bis):
        if point_in_wedge(cut, cand):
            seed = cand
            break
    if seed is None:
        raise RegionError("could not place a seed inside the wedge near the vertex")
    inside = wedge_mask(U.grid, cut) & U.mask & ~_curve_cells(U.grid, cut.curve())
    reg = U.with_mask(inside, label="core")
    i, j, ok = U.grid.locate(np.array([seed]))
    if not (ok[0] and inside[i[0], j[0]]):
        raise RegionError("seed cell near the vertex is not in the wedge at this resolution")
    return CoreComponent(cut, U, reg.component_at(seed))


@dataclass(frozen=True)
class ParalegalVerdict:
    paralegal: bool
    failed: Optional[str] = None
    detail: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "paralegal" if self.paralegal else f"not_paralegal({self.failed})"

    def to_json(self):
        return {"status": self.status, "failed": self.failed, "detail": self.detail}


def paralegal_check(p: Poly, Z: Sequence, U1: Region, n_samples: int = 6,
                    seed: int = 0) -> ParalegalVerdict:
    """Check (i) disjoint wedges, (ii) no critical point in a core component,
    (iii) injectivity on each core component by preimage counting."""
    if not wedges_pairwise_disjoint([c.comb for c in Z]):
        return ParalegalVerdict(False, "wedges", {"reason": "wedge arcs overlap"})
    cps = np.array(critical_points(p), dtype=complex) if p.degree >= 2 else np.zeros(0, complex)
    cores = []
    for cut in Z:
        core = core_component(cut, U1)
        cores.append(core)
        if cps.size and np.any(core.region.contains(cps)):
            return ParalegalVerdict(False, "critical",
                                    {"cut": cut.comb.to_json(), "reason": "critical point in core"})
    rng = np.random.default_rng(seed)
    for core in cores:
        z = core.region.cell_centers()
        if z.size == 0:
            continue
        pick = z[np.sort(rng.choice(z.size, size=min(n_samples, z.size), replace=False))]
        for z0 in pick:
            w = p(complex(z0))
            roots = poly_roots(Poly((p.coefficients[0] - w,) + p.coefficients[1:]))
            count = int(core.region.contains(roots).sum())
            if count > 1:
                return ParalegalVerdict(False, "univalence",
                                        {"cut": core.cut.comb.to_json(), "count": count})
    return ParalegalVerdict(True, None, {"cores": [c.to_json() for c in cores]})
