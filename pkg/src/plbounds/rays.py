"""Numerical external-ray tracing, landing detection and realization of
combinatorial cuts as plane curves."""

from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .angles import Angle, CombCut, period_and_preperiod
from .errors import (
    BudgetExceededError,
    NewtonDivergenceError,
    NoCommonLandingError,
    PreconditionError,
    UnresolvedTraceError,
)
from .poly import (
    Poly,
    _log_boettcher,
    classify_multiplier,
    eval_iterate,
    eval_iterate_deriv,
    eval_poly,
    orbit_multiplier,
    refine_periodic_point,
)

TOL_LAND = 1e-7
T_MIN = 1e-8
STEPS_PER_HALVING = 24
MAX_HALVINGS = 10
# deepest potential an extended trace may reach
T_FLOOR = 1e-250
# contraction per potential halving at or above which a tail counts as near-parabolic
PARABOLIC_CONTRACTION = 0.97
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RayTrace:
    angle: Angle
    points: tuple
    levels: tuple
    status: str = "unresolved"
    landing: Optional[complex] = None
    hint: Optional[dict] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "re", "im"])
        for t, z in zip(self.levels, self.points):
            w.writerow([repr(float(t)), repr(z.real), repr(z.imag)])
        return buf.getvalue()

    def polyline(self) -> np.ndarray:
        return np.array(self.points, dtype=complex)


def _top_level(p: Poly) -> float:
    return 2.0 * math.log(p.escape_radius())


def _target(theta: Angle, D: int, n: int, t: float) -> complex:
    """D^n (t + 2 pi i theta), with the angle reduced exactly."""
    frac = Fraction(theta.p * D ** n % theta.q, theta.q)
    return complex(D ** n * t, TWO_PI * float(frac))


def _wrap(v: complex) -> complex:
    im = (v.imag + math.pi) % TWO_PI - math.pi
    return complex(v.real, im)


def _newton_on_ray(p: Poly, z0: complex, n: int, target: complex, iters: int = 40):
    z = z0
    _converged = False
    for _ in range(iters):
        w, dw = eval_iterate_deriv(p, z, n)
        if not cmath.isfinite(w) or abs(w) < p.escape_radius() * 0.5:
            return None
        lphi, dl = _log_boettcher(p, w)
        f = _wrap(lphi - target)
        df = dl * dw
        if df == 0:
            return None
        # residual floor set by conditioning: |F'| |z| eps
        floor = 64 * 2.2e-16 * abs(df) * max(abs(z), 1.0)
        if abs(f) < max(1e-9 * max(1.0, abs(target.real)), floor) and (abs(f) < 1e-13 or _converged):
            return z
        step = f / df
        _converged = abs(step) < 1e-14 * max(abs(z), 1e-300)
        z = z - step
    return None


def _start_point(p: Poly, theta: Angle, t0: float) -> complex:
    target = _target(theta, p.degree, 0, t0)
    z = cmath.exp(target)
    # shift by the centre of mass of the roots, phi(z) = z + a_{D-1}/D + ...
    z -= p.coefficients[-2] / p.degree
    res = _newton_on_ray(p, z, 0, target)
    if res is None:
        raise NewtonDivergenceError("could not seed the ray at the top level")
    return res


def _iterate_count(t: float, t0: float, D: int) -> int:
    n = 0
    while t * D ** n < t0:
        n += 1
    return n


def trace_external_ray(p: Poly, theta, t_min: float = T_MIN,
                       steps_per_halving: int = STEPS_PER_HALVING,
                       max_points: int = 20000,
                       tol_land: float = TOL_LAND, extend: bool = True) -> RayTrace:
    """Trace R_P(theta) from potential 2 log R_esc down to t_min.

    Each point solves log phi(P^n z) = D^n (t + 2 pi i theta) by Newton,
    with n chosen so the right hand side sits at a safe potential. With
    ``extend``, a tail that is still contracting geometrically at t_min is
    traced further down (to at most T_FLOOR) until it is Cauchy.
    """
    theta = Angle.of(theta)
    if not p.monic:
        raise PreconditionError("ray tracing needs a monic polynomial")
    if t_min <= 0:
        raise PreconditionError("t_min must be positive")
    D = p.degree
    t0 = _top_level(p)
    ratio = 2.0 ** (-1.0 / steps_per_halving)
    z = _start_point(p, theta, t0)
    points = [z]
    levels = [t0]
    t = t0
    last_step = abs(z) * 0.1
    floor = t_min
    while True:
        if t <= floor:
            if not (extend and _keeps_contracting(points, tol_land)) or t <= T_FLOOR:
                break
            floor = max(t * ratio ** (4 * steps_per_halving), T_FLOOR)
        factor = ratio
        for _ in range(MAX_HALVINGS + 1):
            t_new = max(t * factor, floor)
            n = _iterate_count(t_new, t0, D)
            znew = _newton_on_ray(p, z, n, _target(theta, D, n, t_new))
            if znew is not None and abs(znew - z) <= 10.0 * last_step + 1e-12:
                break
            factor = math.sqrt(factor)
        else:
            if t <= t_min:
                break  # precision ran out during the extension; keep what we have
            raise NewtonDivergenceError(f"ray {theta} stalled at level {t:.3g}")
        if t * factor > floor:
            # a step clamped to the floor is short and would starve the guard
            last_step = max(abs(znew - z), 1e-300)
        z = znew
        t = t_new
        points.append(z)
        levels.append(t)
        if len(points) > max_points:
            raise BudgetExceededError("ray trace exceeded max_points")
    trace = RayTrace(theta, tuple(points), tuple(levels))
    return _with_landing(p, trace, tol_land)


def _tail_diameter(points, k: int = 10) -> float:
    tail = np.asarray(points[-k:])
    return float(np.max(np.abs(tail[:, None] - tail[None, :])))


def _remaining(points) -> float:
    """Geometric estimate of the ray length left below the last point."""
    r = _tail_ratio(points, STEPS_PER_HALVING)
    if r is None or r >= 1.0:
        return math.inf
    pts = np.asarray(points[-4:])
    return float(np.max(np.abs(np.diff(pts)))) * r / (1.0 - r)


def _converged(points, tol_land: float) -> bool:
    """Cauchy tail whose extrapolated remainder is also below tolerance."""
    scale = max(1.0, float(np.max(np.abs(np.asarray(points[-10:])))))
    return (len(points) >= 10 and _tail_diameter(points) < tol_land * scale
            and _remaining(points) < tol_land * scale)


def _keeps_contracting(points, tol_land: float) -> bool:
    """Not yet converged but shrinking geometrically (not near-parabolic)."""
    if len(points) < 10 or _converged(points, tol_land):
        return False
    r = _tail_ratio(points, STEPS_PER_HALVING)
    return r is not None and r ** STEPS_PER_HALVING < PARABOLIC_CONTRACTION


def _tail_ratio(points, k=24):
    """Median contraction of consecutive steps over the last k steps.

    The median ignores the odd step clamped to a level floor.
    """
    pts = np.asarray(points)
    if len(pts) < k + 2:
        return None
    steps = np.abs(np.diff(pts[-(k + 1):]))
    if np.count_nonzero(steps) < 2:
        return 0.0
    ratios = steps[1:] / np.where(steps[:-1] > 0, steps[:-1], np.inf)
    return float(np.median(ratios))


def _with_landing(p: Poly, trace: RayTrace, tol_land: float) -> RayTrace:
    """Status landed only for a converged tail; an extrapolated end goes in the hint."""
    try:
        a = landing_point(trace, tol_land, p=p)
    except UnresolvedTraceError as exc:
        return RayTrace(trace.angle, trace.points, trace.levels, "unresolved", None,
                        getattr(exc, "hint", None))
    if not _converged(trace.points, tol_land):
        return RayTrace(trace.angle, trace.points, trace.levels, "unresolved", None,
                        {"extrapolated_landing": [a.real, a.imag]})
    return RayTrace(trace.angle, trace.points, trace.levels, "landed", a, None)


def landing_point(trace: RayTrace, tol_land: float = TOL_LAND, p: Optional[Poly] = None):
    """Landing point of a traced ray.

    A tail of 10 points with diameter below tol_land counts as landed. A
    slower tail is completed by Newton on the periodic point equation, but
    only if the root lies within the geometrically extrapolated remaining
    length of the ray.
    """
    pts = np.asarray(trace.points)
    tail = pts[-10:]
    scale = max(1.0, float(np.max(np.abs(pts[-10:]))))
    diam = float(np.max(np.abs(tail[:, None] - tail[None, :])))
    if diam < tol_land * scale:
        a = complex(tail.mean())
        if p is not None:
            ref = _refine(p, trace.angle, a)
            if ref is not None and abs(ref - a) < 10 * tol_land * scale:
                return ref
        return a
    if p is None:
        raise UnresolvedTraceError("tail has not converged")
    r = _tail_ratio(pts, STEPS_PER_HALVING)
    last = complex(pts[-1])
    last_step = max(abs(pts[-1] - pts[-2]), abs(pts[-2] - pts[-3]))
    # contraction per halving of the potential; near 1 means parabolic
    if r is None or r ** STEPS_PER_HALVING >= PARABOLIC_CONTRACTION:
        err = UnresolvedTraceError(f"ray {trace.angle}: slow (near-parabolic) landing")
        err.hint = _parabolic_hint(p, trace.angle, last)
        raise err
    remaining = last_step * r / (1.0 - r)
    ref = _refine(p, trace.angle, last)
    if ref is None or abs(ref - last) > 5.0 * remaining + tol_land * scale:
        err = UnresolvedTraceError(f"ray {trace.angle}: no periodic point near the tail")
        err.hint = _parabolic_hint(p, trace.angle, last)
        raise err
    return ref


def _refine(p: Poly, theta: Angle, z: complex):
    pre, m = period_and_preperiod(theta, p.degree)
    return refine_periodic_point(p, z, m, pre)


def _parabolic_hint(p: Poly, theta: Angle, z: complex):
    pre, m = period_and_preperiod(theta, p.degree)
    ref = refine_periodic_point(p, z, m, pre)
    if ref is None:
        return {"last_point": [z.real, z.imag]}
    mult = orbit_multiplier(p, eval_iterate(p, ref, pre), m)
    return {"last_point": [z.real, z.imag], "nearby_periodic": [ref.real, ref.imag],
            "distance": abs(ref - z), "multiplier": [mult.real, mult.imag],
            "kind": classify_multiplier(mult)}


@dataclass(frozen=True)
class GeoCut:
    comb: CombCut
    traceR: RayTrace
    traceL: RayTrace
    vertex: Optional[complex]
    period: int = 1
    multiplier: complex = 0j
    kind: str = "degenerate"

    @property
    def degenerate(self) -> bool:
        return self.comb.degenerate

    def curve(self) -> np.ndarray:
        """Polyline: out along R from the vertex is reversed, then back out along L."""
        r = np.array(self.traceR.points[::-1] + ((self.vertex,) if self.vertex is not None else ()))
        ell = np.array(self.traceL.points)
        return np.concatenate([r, ell])

    def to_json(self):
        v = self.vertex
        return {"angles": self.comb.to_json(),
                "vertex": None if v is None else [v.real, v.imag],
                "period": self.period,
                "multiplier": [self.multiplier.real, self.multiplier.imag],
                "kind": self.kind}


def vertex_period(p: Poly, a: complex, m: int) -> int:
    scale = max(1.0, abs(a))
    for k in range(1, m + 1):
        if m % k == 0 and abs(eval_iterate(p, a, k) - a) < 1e-8 * scale:
            return k
    return m


def common_landing(p: Poly, theta1, theta2, tol: float = 1e-6,
                   traces: Optional[dict] = None, t_min: float = T_MIN) -> GeoCut:
    """Realize the combinatorial cut (theta1, theta2) if both rays co-land."""
    theta1, theta2 = Angle.of(theta1), Angle.of(theta2)
    traces = {} if traces is None else traces

    def get(th):
        if th not in traces:
            traces[th] = trace_external_ray(p, th, t_min=t_min)
        return traces[th]

    tr1 = get(theta1)
    comb = CombCut(theta1, theta2)
    if comb.degenerate:
        return GeoCut(comb, tr1, tr1, tr1.landing)
    pre1, s1 = period_and_preperiod(theta1, p.degree)
    pre2, s2 = period_and_preperiod(theta2, p.degree)
    if pre1 or pre2 or s1 != s2:
        raise PreconditionError("both angles must be periodic with equal period")
    tr2 = get(theta2)
    for tr in (tr1, tr2):
        if tr.status != "landed":
            raise UnresolvedTraceError(f"ray {tr.angle} did not land")
    a1, a2 = tr1.landing, tr2.landing
    if abs(a1 - a2) >= tol * max(1.0, abs(a1)):
        raise NoCommonLandingError(f"rays land at {a1} and {a2}")
    a = 0.5 * (a1 + a2)
    ref = refine_periodic_point(p, a, s1)
    if ref is not None and abs(ref - a) < tol:
        a = ref
    per = vertex_period(p, a, s1)
    mult = orbit_multiplier(p, a, per)
    kind = classify_multiplier(mult)
    if kind not in ("repelling", "parabolic"):
        raise NoCommonLandingError(f"vertex {a} is {kind}, not repelling/parabolic")
    return GeoCut(comb, tr1, tr2, a, per, mult, kind)


def rays_landing_at(p: Poly, a: complex, m: int, tol: float = 1e-6,
                    cap: int = 4096, traces: Optional[dict] = None) -> list:
    """All angles k/(D^m - 1) whose rays land within tol of a."""
    den = p.degree ** m - 1
    if den > cap:
        raise BudgetExceededError(f"{den} angles exceed cap {cap}")
    traces = {} if traces is None else traces
    out = []
    for k in range(den):
        th = Angle(k, den)
        if th not in traces:
            traces[th] = trace_external_ray(p, th)
        tr = traces[th]
        if tr.status == "landed" and abs(tr.landing - a) < tol * max(1.0, abs(a)):
            out.append(th)
    return sorted(set(out))


def external_angle_point(p: Poly, theta, t: float) -> complex:
    """The point of R_P(theta) at potential t (traced down from the top)."""
    tr = trace_external_ray(p, theta, t_min=t, tol_land=TOL_LAND)
    return tr.points[-1]
