"""Exact rational angle dynamics under multiplication by D, and the
combinatorics of cuts, wedges and invariant cut cycles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import BudgetExceededError, PreconditionError


@dataclass(frozen=True, order=True)
class Angle:
    """A rational angle p/q in [0, 1), always reduced."""

    p: int
    q: int

    def __post_init__(self):
        if self.q <= 0:
            raise PreconditionError("denominator must be positive")
        p, q = self.p % self.q, self.q
        g = math.gcd(p, q)
        object.__setattr__(self, "p", p // g)
        object.__setattr__(self, "q", q // g)

    @classmethod
    def parse(cls, text: str) -> "Angle":
        """Parse ``"p/q"`` (or a bare integer, meaning 0)."""
        s = str(text).strip()
        try:
            if "/" in s:
                num, den = s.split("/")
                return cls(int(num), int(den))
            return cls(int(s), 1)
        except ValueError:
            raise PreconditionError(f"malformed angle {text!r}; expected 'p/q'") from None

    @classmethod
    def of(cls, value) -> "Angle":
        if isinstance(value, Angle):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        f = Fraction(value)
        return cls(f.numerator, f.denominator)

    def __add__(self, other):
        f = Fraction(self.p, self.q) + Fraction(other.p, other.q) if isinstance(other, Angle) \
            else Fraction(self.p, self.q) + Fraction(other)
        return Angle(f.numerator, f.denominator)

    def __float__(self):
        return self.p / self.q

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.p, self.q)

    def __str__(self):
        return f"{self.p}/{self.q}"


def angle_mulD(theta: Angle, D: int) -> Angle:
    if D < 2:
        raise PreconditionError("D must be >= 2")
    return Angle(theta.p * D, theta.q)


def orbit_period(theta: Angle, D: int):
    """Exact period of theta under x D, or ("preperiodic", l, m).

    The angle is periodic iff its reduced denominator is coprime to D; the
    period is then the multiplicative order of D modulo q.
    """
    if D < 2:
        raise PreconditionError("D must be >= 2")
    q = theta.q
    g = math.gcd(q, D)
    if g == 1:
        return _mult_order(D, q)
    # strip the factors shared with D: q = q0 * q1 with q1 coprime to D
    q1 = q
    while math.gcd(q1, D) > 1:
        q1 //= math.gcd(q1, D)
    m = _mult_order(D, q1)
    pre = 0
    t = theta
    while orbit_period_is_periodic(t, D) is False:
        t = angle_mulD(t, D)
        pre += 1
    return ("preperiodic", pre, m)


def orbit_period_is_periodic(theta: Angle, D: int) -> bool:
    return math.gcd(theta.q, D) == 1


def period_and_preperiod(theta: Angle, D: int):
    """Return (preperiod, period) with preperiod 0 for periodic angles."""
    r = orbit_period(theta, D)
    if isinstance(r, tuple):
        return r[1], r[2]
    return 0, r


@lru_cache(maxsize=None)
def _mult_order(D: int, q: int) -> int:
    """Order of D modulo q (gcd(D, q) = 1), by reducing the Carmichael exponent."""
    if q == 1:
        return 1
    k = _carmichael(q)
    for r in _prime_factors(k):
        while k % r == 0 and pow(D, k // r, q) == 1:
            k //= r
    return k


def _divisors(n: int) -> list:
    small = [d for d in range(1, math.isqrt(n) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


def _prime_factors(n: int) -> list:
    out, f = [], 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def _carmichael(n: int) -> int:
    lam = 1
    for r in _prime_factors(n):
        e, m = 0, n
        while m % r == 0:
            m //= r
            e += 1
        if r == 2 and e >= 3:
            part = 2 ** (e - 2)
        else:
            part = (r - 1) * r ** (e - 1)
        lam = lam * part // math.gcd(lam, part)
    return lam


@lru_cache(maxsize=None)
def _denominator_period(D: int, q: int):
    """(preperiod, period) shared by every reduced p/q."""
    pre = 0
    while math.gcd(q, D) > 1:
        q //= math.gcd(q, D)
        pre += 1
    return pre, _mult_order(D, q)


def orbit_periods(D: int, q: int):
    """(preperiod, period) arrays for all numerators 0..q-1 of p/q under x D."""
    if D < 2 or q < 1:
        raise PreconditionError("need D >= 2 and q >= 1")
    g = np.gcd(np.arange(q), q)
    pre_of = np.zeros(q + 1, dtype=np.int64)
    per_of = np.zeros(q + 1, dtype=np.int64)
    for d in _divisors(q):
        pre_of[d], per_of[d] = _denominator_period(D, q // d)
    pre, per = pre_of[g], per_of[g]
    return pre, per


def brute_force_period(theta: Angle, D: int):
    """Walk the orbit explicitly; reference oracle for orbit_period."""
    seen = {}
    t = theta
    i = 0
    while t not in seen:
        seen[t] = i
        t = Angle(t.p * D, t.q)
        i += 1
    start = seen[t]
    per = i - start
    if start == 0:
        return per
    return ("preperiodic", start, per)


@dataclass(frozen=True)
class CombCut:
    """Two ray angles; the wedge is the open arc counterclockwise from R to L."""

    thetaR: Angle
    thetaL: Angle

    @property
    def degenerate(self) -> bool:
        return self.thetaR == self.thetaL

    def arc(self):
        """The wedge arc as (start, length) in exact fractions; None if empty."""
        if self.degenerate:
            return None
        a = self.thetaR.fraction
        length = (self.thetaL.fraction - a) % 1
        return a, length

    def wedge_contains(self, theta) -> bool:
        if self.degenerate:
            return False
        a, length = self.arc()
        x = (Angle.of(theta).fraction - a) % 1
        return 0 < x < length

    def image(self, D: int) -> "CombCut":
        return CombCut(angle_mulD(self.thetaR, D), angle_mulD(self.thetaL, D))

    def to_json(self):
        return [str(self.thetaR), str(self.thetaL)]


def _arcs_overlap(c1: CombCut, c2: CombCut) -> bool:
    if c1.degenerate or c2.degenerate:
        return False
    a1, l1 = c1.arc()
    a2, l2 = c2.arc()
    # open arcs overlap iff either start lies strictly inside the other arc,
    # or they share the same start
    d12 = (a2 - a1) % 1
    d21 = (a1 - a2) % 1
    return d12 == 0 or d12 < l1 or d21 < l2


@dataclass(frozen=True)
class CombCutCycle:
    cuts: tuple
    degree: int
    period: int

    @classmethod
    def from_cut(cls, cut: CombCut, D: int) -> "CombCutCycle":
        """The x D orbit of a periodic cut."""
        pre, s = period_and_preperiod(cut.thetaR, D)
        pre2, s2 = period_and_preperiod(cut.thetaL, D)
        if pre or pre2 or s != s2:
            raise PreconditionError("cut angles must be periodic with equal period")
        cuts = [cut]
        c = cut.image(D)
        while c != cut:
            cuts.append(c)
            c = c.image(D)
        return cls(tuple(cuts), D, s)

    def is_invariant(self) -> bool:
        imgs = {c.image(self.degree) for c in self.cuts}
        return imgs == set(self.cuts)


def wedges_pairwise_disjoint(Z) -> bool:
    cuts = Z.cuts if isinstance(Z, CombCutCycle) else tuple(Z)
    for c1, c2 in combinations(cuts, 2):
        if _arcs_overlap(c1, c2):
            return False
    return True


def periodic_angles(D: int, s: int, exact: bool = True) -> list:
    """Angles k/(D^s - 1) of exact period s (or period dividing s)."""
    den = D ** s - 1
    out = []
    for k in range(den):
        a = Angle(k, den)
        per = orbit_period(a, D)
        if (per == s) if exact else (s % per == 0):
            out.append(a)
    return sorted(set(out))


def enumerate_cut_candidates(D: int, s: int, q_max: int = 100000) -> list:
    """All unordered pairs of distinct angles of exact period s.

    These are the only possible boundary angles of period-s cuts.
    """
    if s < 1:
        raise PreconditionError("s must be >= 1")
    if D ** s - 1 > 10 * q_max:
        raise BudgetExceededError(f"denominator {D ** s - 1} exceeds budget")
    angles = periodic_angles(D, s)
    n_pairs = len(angles) * (len(angles) - 1) // 2
    if n_pairs > q_max:
        raise BudgetExceededError(f"{n_pairs} candidate pairs exceed q_max={q_max}")
    return [(a, b) for a, b in combinations(angles, 2)]


def wake_to_dynamic_angles(theta1: Angle, theta2: Angle):
    """Parameter wake angles (t1, t2) -> dynamic cut angles (t1 + 1/3, t2 + 2/3)."""
    return theta1 + Fraction(1, 3), theta2 + Fraction(2, 3)
