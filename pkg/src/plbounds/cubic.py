"""The lambda-slices of cubic polynomials f(z) = lambda z + b z^2 + z^3:
critical and co-critical points, connectedness and principal-hyperbolic
rasters, parameter rays, wakes and immediate renormalization attempts."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from matplotlib.path import Path as MplPath

from .angles import Angle, wake_to_dynamic_angles
from .errors import (
    BudgetExceededError,
    NewtonDivergenceError,
    NoCommonLandingError,
    PreconditionError,
    StageFailure,
    UnresolvedTraceError,
)
from .parallel import ordered_map
from .poly import Poly, _log_boettcher

TWO_PI = 2.0 * math.pi
OUT, UNDECIDED, IN = 0, 1, 2
PALETTE = {OUT: 0, UNDECIDED: 128, IN: 255}


@dataclass(frozen=True)
class CubicParams:
    lam: complex
    b: complex

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        object.__setattr__(self, "b", complex(self.b))
        if abs(self.lam) > 1 + 1e-12:
            raise PreconditionError("|lambda| must be at most 1")

    def poly(self) -> Poly:
        return Poly((0, self.lam, self.b, 1))

    def __call__(self, z):
        return _f(self.lam, self.b, z)

    def critical_points(self):
        """(omega1, omega2) with omega1 the one closer to 0."""
        disc = cmath.sqrt(self.b * self.b - 3 * self.lam)
        c1 = (-self.b + disc) / 3
        c2 = (-self.b - disc) / 3
        return (c1, c2) if abs(c1) <= abs(c2) else (c2, c1)

    def escape_radius(self) -> float:
        return 2.0 * max(1.0, abs(self.lam) + abs(self.b) + 1.0)

    def to_json(self):
        return {"lambda": [self.lam.real, self.lam.imag], "b": [self.b.real, self.b.imag]}


def _f(lam, b, z):
    # ((z + b) z + lam) z is odd under (z, b) -> (-z, -b) in floating point too
    return ((z + b) * z + lam) * z


def cocritical_point(params: CubicParams, omega2: complex) -> complex:
    """The point other than omega2 with the same image: -b - 2 omega2."""
    lam, b = params.lam, params.b
    omega2 = complex(omega2)
    scale = max(1.0, abs(b), abs(lam)) * max(1.0, abs(omega2))
    if abs(3 * omega2 * omega2 + 2 * b * omega2 + lam) > 1e-9 * scale:
        raise PreconditionError(f"{omega2} is not a critical point")
    if abs(b * b - 3 * lam) <= 1e-12 * max(1.0, abs(b) ** 2):
        raise PreconditionError("double critical point (lambda = b^2/3)")
    return -b - 2 * omega2


# -- escape tests --------------------------------------------------------------

def _orbits_bounded(lam, b, zs, max_iter, radius):
    """Vectorized: True where the orbit of zs stays within radius."""
    z = np.array(zs, dtype=complex)
    b = np.broadcast_to(np.asarray(b, dtype=complex), z.shape)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), z.shape)
    alive = np.ones(z.shape, dtype=bool)
    idx = np.flatnonzero(alive)
    zz, bb, rr = z.ravel().copy(), b.ravel().copy(), radius.ravel().copy()
    for _ in range(max_iter):
        zz = _f(lam, bb, zz)
        ok = np.abs(zz) <= rr
        if not ok.all():
            alive.flat[idx[~ok]] = False
            idx, zz, bb, rr = idx[ok], zz[ok], bb[ok], rr[ok]
            if idx.size == 0:
                break
    return alive


def _critical_arrays(lam, b):
    b = np.asarray(b, dtype=complex)
    disc = np.sqrt(b * b - 3 * lam)
    return (-b + disc) / 3, (-b - disc) / 3


def _escape_radius_array(lam, b):
    return 2.0 * np.maximum(1.0, abs(lam) + np.abs(b) + 1.0)


def connectedness_test(params: CubicParams, max_iter: int = 500,
                       R_esc: Optional[float] = None) -> bool:
    """Both critical orbits stay below R_esc for max_iter steps."""
    R = params.escape_radius() if R_esc is None else R_esc
    c1, c2 = _critical_arrays(params.lam, np.array([params.b]))
    ok = _orbits_bounded(params.lam, np.array([params.b] * 2), np.concatenate([c1, c2]),
                         max_iter, R)
    return bool(ok.all())


def _linearization_radius(lam, b):
    """Radius r with |f(z)| <= (1 + |lam|)/2 |z| on |z| <= r."""
    slack = (1.0 - abs(lam)) / 2.0
    ab = np.abs(b)
    return (-ab + np.sqrt(ab * ab + 4 * slack)) / 2.0


def _converges_to_zero(lam, b, zs, max_iter):
    """1 where the orbit enters the contracting disk, 0 on escape, -1 undecided."""
    z = np.array(zs, dtype=complex).ravel()
    b = np.broadcast_to(np.asarray(b, dtype=complex), np.shape(zs)).ravel().copy()
    r_lin = _linearization_radius(lam, b)
    R = _escape_radius_array(lam, b)
    state = np.full(z.shape, -1, dtype=np.int8)
    idx = np.arange(z.size)
    for _ in range(max_iter + 1):
        az = np.abs(z)
        done_in = az < r_lin
        done_out = az > R
        if done_in.any() or done_out.any():
            state[idx[done_in]] = 1
            state[idx[done_out]] = 0
            keep = ~(done_in | done_out)
            idx, z, b, r_lin, R = idx[keep], z[keep], b[keep], r_lin[keep], R[keep]
            if idx.size == 0:
                break
        z = _f(lam, b, z)
    return state.reshape(np.shape(zs))


def principal_hyperbolic_test(params: CubicParams, max_iter: int = 2000) -> bool:
    """Both critical orbits enter the disk around 0 on which f contracts."""
    if abs(params.lam) >= 1:
        raise PreconditionError("needs |lambda| < 1")
    c1, c2 = _critical_arrays(params.lam, np.array([params.b]))
    st = _converges_to_zero(params.lam, np.array([params.b] * 2), np.concatenate([c1, c2]),
                            max_iter)
    return bool(np.all(st == 1))


# -- slice rasters ----------------------------------------------------------------

def slice_grid(center: complex, half_width: float, n: int) -> np.ndarray:
    """n x n b-values symmetric about the centre: b_k = centre + (k - (n-1)/2) h."""
    h = 2.0 * half_width / n
    k = (np.arange(n) - (n - 1) / 2.0) * h
    X, Y = np.meshgrid(k, k)
    return center + (X + 1j * Y)


def _tiles(n_rows: int, tile: int):
    return [(i, min(i + tile, n_rows)) for i in range(0, n_rows, tile)]


def slice_rasters(lam: complex, bs: np.ndarray, max_iter: int = 500,
                  ph_iter: int = 2000, workers: int = 1, tile: int = 32):
    """Connectedness and principal-hyperbolic label rasters over a b-grid.

    Labels: 0 out, 1 undecided, 2 in. Tiles are processed in fixed order and
    written to fixed slots, so the result does not depend on workers.
    """
    lam = complex(lam)
    conn = np.zeros(bs.shape, dtype=np.uint8)
    ph = np.zeros(bs.shape, dtype=np.uint8)
    check_ph = abs(lam) < 1

    def work(span):
        i0, i1 = span
        b = bs[i0:i1]
        c1, c2 = _critical_arrays(lam, b)
        R = _escape_radius_array(lam, b)
        k1 = _orbits_bounded(lam, b, c1, max_iter, R)
        k2 = _orbits_bounded(lam, b, c2, max_iter, R)
        conn_t = np.where(k1 & k2, IN, OUT).astype(np.uint8)
        if check_ph:
            s1 = _converges_to_zero(lam, b, c1, ph_iter)
            s2 = _converges_to_zero(lam, b, c2, ph_iter)
            ph_t = np.where((s1 == 1) & (s2 == 1), IN,
                            np.where((s1 == 0) | (s2 == 0), OUT, UNDECIDED)).astype(np.uint8)
        else:
            ph_t = np.full(b.shape, UNDECIDED, dtype=np.uint8)
        return span, conn_t, ph_t

    for (i0, i1), c, p in ordered_map(work, _tiles(bs.shape[0], tile), workers):
        conn[i0:i1] = c
        ph[i0:i1] = p
    return conn, ph


def raster_png_bytes(labels: np.ndarray) -> bytes:
    """8-bit grayscale: out 0, undecided 128, in 255; row 0 at the top is the largest Im b."""
    import io as _io

    from PIL import Image

    lut = np.zeros(256, dtype=np.uint8)
    for k, v in PALETTE.items():
        lut[k] = v
    img = Image.fromarray(lut[labels[::-1]], mode="L")
    buf = _io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


# -- parameter rays ------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterRay:
    lam: complex
    angle: Angle
    points: tuple
    levels: tuple
    status: str

    def polyline(self) -> np.ndarray:
        return np.array(self.points, dtype=complex)

    def to_csv(self) -> str:
        rows = ["level,re,im"]
        rows.extend(f"{t!r},{b.real!r},{b.imag!r}" for t, b in zip(self.levels, self.points))
        return "\n".join(rows) + "\n"


def _escaping_critical(lam, b):
    """The critical point whose orbit escapes (the one farther from 0)."""
    c1, c2 = CubicParams(lam, b).critical_points()
    return c2


def _param_residual(lam, b, n, target):
    """wrap(log phi_b(f^n(omega2*)) - target), or None if not computable."""
    p = CubicParams(lam, b)
    w2 = _escaping_critical(lam, b)
    z = -b - 2 * w2
    R = p.escape_radius()
    poly = p.poly()
    for _ in range(n):
        z = p(z)
    if not cmath.isfinite(z) or abs(z) < R:
        return None
    lphi, _ = _log_boettcher(poly, z)
    d = lphi - target
    return complex(d.real, (d.imag + math.pi) % TWO_PI - math.pi)


def _depth(lam, b, t):
    """Iterate count n making 3^n t a safe potential for the current b."""
    p = CubicParams(lam, b)
    w2 = _escaping_critical(lam, b)
    z = -b - 2 * w2
    R = p.escape_radius()
    n = 0
    while abs(z) < 4 * R:
        z = p(z)
        n += 1
        if n > 200 or not cmath.isfinite(z):
            return None
    return n


def _param_target(theta: Angle, n: int, t: float) -> complex:
    frac = (theta.p * 3 ** n % theta.q) / theta.q
    return complex(3 ** n * t, TWO_PI * frac)


def _param_newton(lam, b0, n, target, iters=30):
    b = b0
    for _ in range(iters):
        F = _param_residual(lam, b, n, target)
        if F is None:
            return None
        if abs(F) < 1e-10 * max(1.0, abs(target.real)):
            return b
        db = 1e-7 * max(1.0, abs(b))
        F2 = _param_residual(lam, b + db, n, target)
        if F2 is None or F2 == F:
            return None
        step = F * db / (F2 - F)
        b = b - step
        if abs(step) < 1e-13 * max(1.0, abs(b)):
            return b
    return None


def parameter_ray(lam: complex, theta, t_min: float = 1e-3, t0: float = 6.0,
                  steps_per_halving: int = 24, max_points: int = 5000) -> ParameterRay:
    """Trace the parameter ray of angle theta in the b-plane of the lambda-slice."""
    lam = complex(lam)
    if abs(lam) > 1 + 1e-12:
        raise PreconditionError("|lambda| must be at most 1")
    theta = Angle.of(theta)
    b = 1.5 * cmath.exp(complex(t0, TWO_PI * float(theta)))
    t = t0
    n = _depth(lam, b, t)
    b = _param_newton(lam, b, n, _param_target(theta, n, t))
    if b is None:
        raise NewtonDivergenceError("could not seed the parameter ray")
    points, levels = [b], [t]
    ratio = 2.0 ** (-1.0 / steps_per_halving)
    last = abs(b) * 0.1
    status = "complete"
    while t > t_min:
        factor = ratio
        for _ in range(11):
            t_new = max(t * factor, t_min)
            n = _depth(lam, b, t_new)
            bn = None if n is None else _param_newton(lam, b, n, _param_target(theta, n, t_new))
            if bn is not None and abs(bn - b) <= 10 * last + 1e-12:
                break
            factor = math.sqrt(factor)
        else:
            status = "stopped"
            break
        last = max(abs(bn - b), 1e-300)
        b, t = bn, t_new
        points.append(b)
        levels.append(t)
        if len(points) > max_points:
            raise BudgetExceededError("parameter ray exceeded max_points")
    return ParameterRay(lam, theta, tuple(points), tuple(levels), status)


def _segment_distance(poly: np.ndarray, z: complex) -> float:
    a, b = poly[:-1], poly[1:]
    ab = b - a
    L2 = np.abs(ab) ** 2
    s = np.clip(np.real((z - a) * np.conj(ab)) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    return float(np.min(np.abs(a + s * ab - z)))


def wake_probe(lam: complex, theta1, theta2, b: complex, t_min: float = 1e-6,
               tol: float = 0.1, rays=None) -> str:
    """'inside', 'outside' or 'boundary' for the wake bounded by two parameter rays."""
    th1, th2 = Angle.of(theta1), Angle.of(theta2)
    r1, r2 = rays if rays is not None else (parameter_ray(lam, th1, t_min),
                                             parameter_ray(lam, th2, t_min))
    p1, p2 = r1.polyline(), r2.polyline()
    gap = abs(p1[-1] - p2[-1])
    if gap > tol:
        raise NoCommonLandingError(f"parameter rays end {gap:.3g} apart")
    root = 0.5 * (p1[-1] + p2[-1])
    curve = np.concatenate([p1, [root], p2[::-1]])
    b = complex(b)
    if _segment_distance(curve, b) < 0.25 * tol:
        return "boundary"
    length = (th2.fraction - th1.fraction) % 1
    a1 = cmath.phase(p1[0])
    a2 = cmath.phase(p2[0])
    sweep = a2 - a1
    sweep += TWO_PI * round((TWO_PI * float(length) - sweep) / TWO_PI)
    s = np.linspace(0.0, 1.0, 256)[1:-1]
    rad = abs(p2[0]) + (abs(p1[0]) - abs(p2[0])) * s
    arc = rad * np.exp(1j * (a2 - sweep * s))
    poly = np.concatenate([curve, arc, p1[:1]])
    path = MplPath(np.column_stack([poly.real, poly.imag]))
    return "inside" if path.contains_point((b.real, b.imag)) else "outside"


# -- immediate renormalization --------------------------------------------------------

def immediate_renorm_attempt(params: CubicParams, config=None, wake_pairs=(), workers: int = 1):
    """Quadratic-like restriction at 0 with an attached cut cycle, via the pipeline.

    Candidate dynamic cuts come from wake angle pairs (shifted by 1/3, 2/3)
    and from a direct scan of fixed and period-two ray pairs.
    """
    from .certify import PipelineConfig, renorm_certify_pipeline

    if not connectedness_test(params):
        raise StageFailure("precondition", "filled set is disconnected")
    cfg = config or PipelineConfig(h=0.004, s_max=2, disk_radii=(), strategies=("equipotential",))
    extra = [tuple(wake_to_dynamic_angles(Angle.of(a), Angle.of(b))) for a, b in wake_pairs]
    return renorm_certify_pipeline(params.poly(), 1, 0j, cfg, extra_pairs=extra,
                                   workers=workers)
