"""Complex polynomial arithmetic, Green potential and Böttcher data near
infinity, critical points and periodic orbits with their multipliers."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegreeOverflowError,
    DomainError,
    PreconditionError,
    RootFindingError,
    UnresolvedClusterError,
)

COEFF_BUDGET = 1 << 16
COMPANION_MAX_DEGREE = 64
TOL_CLASS = 1e-9
PARABOLIC_ORDER = 64
PARABOLIC_TOL = 1e-6
T_SAFE = 1.0


@dataclass(frozen=True)
class Poly:
    """A complex polynomial, coefficients stored lowest degree first.

    >>> Poly.from_roots_free([-1, 0, 1])(2)
    (3+0j)
    """

    coefficients: tuple
    monic: bool = field(init=False)

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.coefficients)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        if not coeffs or coeffs[-1] == 0:
            raise PreconditionError("the zero polynomial is not allowed")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "monic", coeffs[-1] == 1)

    @classmethod
    def from_roots_free(cls, coeffs: Sequence[complex]) -> "Poly":
        return cls(tuple(coeffs))

    @classmethod
    def quadratic(cls, c: complex) -> "Poly":
        return cls((c, 0, 1))

    @classmethod
    def monomial(cls, degree: int) -> "Poly":
        return cls((0,) * degree + (1,))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def normalized(self) -> "Poly":
        """Affinely conjugate to a monic polynomial (z -> k z with k^(D-1) = lead)."""
        if self.monic:
            return self
        d = self.degree
        k = self.coefficients[-1] ** (1.0 / (d - 1))
        # q(z) = k p(z / k)
        return Poly(tuple(c * k * k ** (-j) for j, c in enumerate(self.coefficients)))

    def __call__(self, z):
        return eval_poly(self, z)

    def derivative(self) -> "Poly":
        if self.degree == 0:
            raise PreconditionError("derivative of a constant is zero")
        return Poly(tuple(j * c for j, c in enumerate(self.coefficients) if j > 0))

    def deriv_eval(self, z):
        """Return (p(z), p'(z)) by a single Horner pass."""
        c = self.coefficients
        val = c[-1] * (z * 0 + 1)
        der = z * 0
        for a in c[-2::-1]:
            der = der * z + val
            val = val * z + a
        return val, der

    def compose(self, other: "Poly") -> "Poly":
        """Return self(other(z))."""
        out = np.array([self.coefficients[-1]], dtype=complex)
        inner = np.array(other.coefficients, dtype=complex)
        for a in self.coefficients[-2::-1]:
            out = np.polynomial.polynomial.polymul(out, inner)
            out[0] += a
        return Poly(tuple(out))

    def escape_radius(self) -> float:
        return 2.0 * max(1.0, sum(abs(c) for c in self.coefficients))

    def to_json(self) -> dict:
        return {
            "coefficients": [[c.real, c.imag] for c in self.coefficients],
            "monic": self.monic,
        }

    @classmethod
    def from_json(cls, data) -> "Poly":
        if isinstance(data, dict):
            coeffs = data["coefficients"]
        else:
            coeffs = data
        p = cls(tuple(complex(re, im) for re, im in coeffs))
        if isinstance(data, dict) and data.get("monic") and not p.monic:
            raise PreconditionError("monic flag set but leading coefficient is not 1")
        return p

    def __repr__(self):
        terms = ", ".join(f"{c:.6g}" for c in self.coefficients)
        return f"Poly([{terms}])"


def eval_poly(p: Poly, z):
    """Horner evaluation; works on Python complex numbers and numpy arrays."""
    c = p.coefficients
    acc = c[-1] * (z * 0 + 1) if isinstance(z, np.ndarray) else c[-1]
    for a in c[-2::-1]:
        acc = acc * z + a
    return acc


def eval_iterate(p: Poly, z, n: int):
    for _ in range(n):
        z = eval_poly(p, z)
    return z


def eval_iterate_deriv(p: Poly, z, n: int):
    """Return (P^n(z), (P^n)'(z))."""
    d = z * 0 + 1
    for _ in range(n):
        v, dv = p.deriv_eval(z)
        d = d * dv
        z = v
    return z, d


def iterate_poly(p: Poly, n: int, budget: int = COEFF_BUDGET) -> Poly:
    """Return the n-th iterate P^n as an explicit polynomial."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if p.degree ** n > budget:
        raise DegreeOverflowError(f"degree {p.degree}^{n} exceeds budget {budget}")
    q = p
    for _ in range(n - 1):
        q = p.compose(q)
    if p.monic:
        q = Poly(q.coefficients[:-1] + (1,))
    return q


def _newton_polish(f_df, z, scale, iters=50, tol=1e-14):
    for _ in range(iters):
        v, d = f_df(z)
        if d == 0:
            break
        step = v / d
        z = z - step
        if abs(step) <= tol * scale:
            break
    return z


def _aberth(f_df, degree, radius, iters=500, tol=1e-14):
    k = np.arange(degree)
    z = radius * np.exp(2j * np.pi * (k + 0.25) / degree)
    for _ in range(iters):
        v, d = f_df(z)
        ratio = v / d
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, np.inf)
        s = (1.0 / diff).sum(axis=1)
        w = ratio / (1.0 - ratio * s)
        z = z - w
        if np.all(np.abs(w) <= tol * np.maximum(1.0, np.abs(z))):
            return z
    if not np.all(np.isfinite(z)):
        raise RootFindingError("Aberth iteration diverged")
    return z


def poly_roots(p: Poly) -> np.ndarray:
    """All roots with multiplicity; companion eigenvalues up to degree 64."""
    d = p.degree
    if d == 0:
        return np.zeros(0, dtype=complex)
    scale = max(1.0, max(abs(c) for c in p.coefficients) / abs(p.coefficients[-1]))
    if d <= COMPANION_MAX_DEGREE:
        roots = np.roots(np.array(p.coefficients[::-1]))
    else:
        roots = _aberth(p.deriv_eval, d, 1.0 + scale)
    if not np.all(np.isfinite(roots)):
        raise RootFindingError("root finder did not converge")
    return np.array([_newton_polish(p.deriv_eval, complex(r), scale) for r in roots])


def critical_points(p: Poly) -> list:
    """Roots of p' with multiplicity, Newton-polished."""
    if p.degree < 2:
        raise PreconditionError("critical points need degree >= 2")
    dp = p.derivative()
    roots = poly_roots(dp)
    scale = max(1.0, max(abs(c) for c in dp.coefficients))
    for r in roots:
        if abs(eval_poly(dp, r)) > 1e-6 * scale * max(1.0, abs(r)) ** dp.degree:
            raise RootFindingError(f"critical point residual too large at {r}")
    return sorted((complex(r) for r in roots), key=lambda z: (round(z.real, 12), round(z.imag, 12)))


def _big_radius(d: int) -> float:
    return 1e12 if d <= 20 else 10.0 ** (250.0 / d)


def green_potential(p: Poly, z: complex, max_iter: int = 5000) -> float:
    """Green function G(z) = lim log|P^n z| / D^n of the basin of infinity."""
    d = p.degree
    big = _big_radius(d)
    z = complex(z)
    for n in range(max_iter):
        az = abs(z)
        if az > big:
            return _green_tail(p, z, n)
        z = eval_poly(p, z)
    return 0.0


def _green_tail(p, z, n):
    d = p.degree
    # one correction term of the telescoping series; the rest is < 1e-20
    total = math.log(abs(z)) + math.log(abs(_ratio(p, z))) / d
    return total / d ** n


def _ratio(p: Poly, z):
    """P(z) / z^D evaluated without overflow as a polynomial in 1/z."""
    w = 1.0 / z
    acc = p.coefficients[0]
    for a in p.coefficients[1:]:
        acc = acc * w + a
    return acc


def green_potential_grid(p: Poly, points: np.ndarray, max_iter: int = 2000) -> np.ndarray:
    """Vectorized Green potential for an array of points."""
    d = p.degree
    big = _big_radius(d)
    z = np.array(points, dtype=complex).ravel()
    out = np.zeros(z.shape, dtype=float)
    active = np.arange(z.size)
    zz = z.copy()
    for n in range(max_iter):
        if active.size == 0:
            break
        az = np.abs(zz)
        done = az > big
        if np.any(done):
            zd = zz[done]
            w = 1.0 / zd
            acc = np.full(zd.shape, p.coefficients[0], dtype=complex)
            for a in p.coefficients[1:]:
                acc = acc * w + a
            out[active[done]] = (np.log(az[done]) + np.log(np.abs(acc)) / d) / float(d) ** n
            keep = ~done
            active = active[keep]
            zz = zz[keep]
        zz = eval_poly(p, zz)
    return out.reshape(np.shape(points))


def _log_boettcher(p: Poly, z: complex):
    """Return (log phi(z), d log phi / dz) by the product formula.

    Valid on {|z| >= escape radius}, where every factor P(z_k)/z_k^D lies in
    the disk |w - 1| <= 1/2 and the principal logarithm is the right branch.
    """
    d = p.degree
    c = p.coefficients
    logphi = cmath.log(z)
    dlog = 1.0 / z
    zk = z
    s = 1.0 / z  # (dz_k/dz) / z_k
    scale = 1.0
    for _ in range(200):
        scale /= d
        w = 1.0 / zk
        # ratio = P(zk)/zk^d, and zk * P'(zk) / P(zk)
        r = c[0]
        for a in c[1:]:
            r = r * w + a
        rp = 0j
        for j in range(d + 1):
            rp = rp * w + j * c[j]
        # zk P'(zk)/zk^d = sum j c_j w^{d-j}; ratio of the two gives zk P'/P
        zpp = rp / r
        term = cmath.log(r) * scale
        logphi += term
        dlog += (zpp - d) * s * scale
        if abs(r - 1) < 1e-18 and abs(zpp - d) < 1e-18:
            break
        s = s * zpp
        if abs(zk) > 1e250 ** (1.0 / d):
            break
        zk = zk ** d * r
    return logphi, dlog


def boettcher_near_infinity(p: Poly, z: complex, t_safe: float = T_SAFE) -> complex:
    """Böttcher coordinate phi_P(z), normalized by phi(z)/z -> 1."""
    if not p.monic:
        raise PreconditionError("Böttcher coordinate requires a monic polynomial")
    g = green_potential(p, z)
    if g <= t_safe:
        raise DomainError(f"G(z) = {g:.4g} <= t_safe = {t_safe}")
    r = p.escape_radius()
    m = 0
    w = complex(z)
    while abs(w) < r:
        w = eval_poly(p, w)
        m += 1
    logphi, _ = _log_boettcher(p, w)
    if m == 0:
        return cmath.exp(logphi)
    # pull back along the orbit: the principal D^m-th root is selected by
    # continuity from the branch z + O(1), checked against z itself
    d = p.degree
    base = logphi / d ** m
    k = d ** m
    best = None
    for j in range(k):
        cand = cmath.exp(base + 2j * math.pi * j / k)
        if best is None or abs(cand - z) < abs(best - z):
            best = cand
    return best


@dataclass(frozen=True)
class PeriodicOrbit:
    points: tuple
    period: int
    multiplier: complex
    kind: str

    def to_json(self) -> dict:
        return {
            "points": [[z.real, z.imag] for z in self.points],
            "period": self.period,
            "multiplier": [self.multiplier.real, self.multiplier.imag],
            "kind": self.kind,
        }


def classify_multiplier(mult: complex, tol: float = TOL_CLASS) -> str:
    a = abs(mult)
    if a > 1 + tol:
        return "repelling"
    if a < 1 - tol:
        return "attracting"
    for k in range(1, PARABOLIC_ORDER + 1):
        if abs(mult ** k - 1) <= PARABOLIC_TOL:
            return "parabolic"
    return "indifferent_irrational"


def orbit_multiplier(p: Poly, z: complex, m: int) -> complex:
    return complex(eval_iterate_deriv(p, complex(z), m)[1])


def find_periodic_points(p: Poly, n: int, budget: int = 4096) -> list:
    """All periodic orbits whose period divides n, grouped and classified."""
    d = p.degree
    if d ** n > budget:
        raise DegreeOverflowError(f"{d}^{n} roots exceed budget {budget}")

    def f_df(z):
        w, dw = eval_iterate_deriv(p, z, n)
        return w - z, dw - 1

    deg = d ** n
    scale = max(1.0, p.escape_radius() / 2)
    if deg <= COMPANION_MAX_DEGREE:
        q = iterate_poly(p, n)
        coeffs = list(q.coefficients)
        coeffs[1] -= 1
        roots = np.roots(np.array(coeffs[::-1]))
    else:
        roots = _aberth(f_df, deg, scale)
    roots = [_newton_polish(f_df, complex(r), scale) for r in roots]
    tol = 1e-9 * scale
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) < tol:
                # a genuine multiple root is tolerated only at a parabolic point
                mult = orbit_multiplier(p, roots[i], n)
                if abs(mult - 1) > 1e-4:
                    raise UnresolvedClusterError(
                        f"roots {roots[i]} and {roots[j]} closer than {tol:g}")
    match_tol = max(1e-6 * scale, 1e3 * tol)
    assigned = [False] * len(roots)
    orbits = []
    for i, z in enumerate(roots):
        if assigned[i]:
            continue
        period = n
        for k in range(1, n + 1):
            if n % k == 0 and abs(eval_iterate(p, z, k) - z) < match_tol:
                period = k
                break
        pts = [z]
        w = z
        for _ in range(period - 1):
            w = eval_poly(p, w)
            pts.append(w)
        for w in pts:
            dists = [abs(w - r) if not assigned[j] else math.inf for j, r in enumerate(roots)]
            j = int(np.argmin(dists))
            if dists[j] < match_tol:
                assigned[j] = True
        mult = 1 + 0j
        for w in pts:
            mult *= p.deriv_eval(w)[1]
        orbits.append(PeriodicOrbit(tuple(complex(w) for w in pts), period, complex(mult),
                                    classify_multiplier(mult)))
    orbits.sort(key=lambda o: (o.period, round(o.points[0].real, 9), round(o.points[0].imag, 9)))
    return orbits


def refine_periodic_point(p: Poly, z: complex, m: int, preperiod: int = 0, iters: int = 60):
    """Newton on P^{l+m}(z) = P^l(z); returns the root or None if Newton stalls."""
    scale = max(1.0, abs(z))

    def f_df(w):
        a, da = eval_iterate_deriv(p, w, preperiod)
        b, db = eval_iterate_deriv(p, a, m)
        return b - a, db * da - da

    w = complex(z)
    for _ in range(iters):
        v, dv = f_df(w)
        if dv == 0 or not cmath.isfinite(v):
            return None
        step = v / dv
        w -= step
        if abs(step) < 1e-15 * scale:
            break
    v, _ = f_df(w)
    if abs(v) > 1e-9 * scale:
        return None
    return w
