"""Certificates for modulus inequalities of polynomial-like restrictions
with attached periodic cuts, and the end-to-end renormalization pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .angles import Angle, CombCut, CombCutCycle
from .artifacts import config_digest
from .errors import (
    DegreeOverflowError,
    NoCommonLandingError,
    PLBoundsError,
    PreconditionError,
    StageFailure,
)
from .extremal import ModulusEstimate, annulus_modulus
from .parallel import ordered_map
from .poly import Poly, critical_points, iterate_poly
from .rays import GeoCut, common_landing, trace_external_ray
from .regions import (
    Grid,
    PLRestriction,
    Region,
    build_pl_restriction,
    containment_margin,
    disk_region,
    equipotential_region,
    filled_set,
    is_attached,
    paralegal_check,
    point_in_wedge,
    truncate_by_wedges,
)

MU_MIN = 1e-6
VERDICTS = ("consistent_strong", "consistent", "suspect")


@dataclass(frozen=True)
class Access:
    """An access to a cut vertex: A (boundary ray), C (extra ray in a wedge), B (bounded Fatou)."""

    kind: str
    period: int
    degree: int = 2

    def __post_init__(self):
        if self.kind not in ("A", "B", "C"):
            raise PreconditionError(f"unknown access kind {self.kind!r}")
        if self.period < 1:
            raise PreconditionError("access period must be >= 1")

    @property
    def conj_multiplier(self):
        """D^m for accesses from the basin of infinity; unavailable for Fatou accesses."""
        if self.kind == "B":
            return "unavailable"
        return self.degree ** self.period


def rhs_value(count: int, D: int) -> float:
    """count * pi / log D, rounded one ulp toward the weaker claim."""
    if count < 0:
        raise PreconditionError("access count must be nonnegative")
    if D < 2:
        raise PreconditionError("D must be >= 2")
    if count == 0:
        return 0.0
    return math.nextafter(count * math.pi / math.log(D), 0.0)


def verdict_for(lhs_lower: float, lhs_upper: float, rhs: float) -> str:
    if lhs_lower >= rhs:
        return "consistent_strong"
    if lhs_upper >= rhs:
        return "consistent"
    return "suspect"


@dataclass(frozen=True)
class Certificate:
    theorem: str
    D: int
    degree_of_iterate: int
    s: int
    Z_angles: tuple
    C_count: int
    B_detected: tuple
    mod_lower: float
    mod_upper: float
    rhs: float
    verdict: str
    h: float
    config_digest: str = ""
    annotations: tuple = ()

    @property
    def lhs(self):
        """Interval for 1/mod."""
        lo = 1.0 / self.mod_upper if self.mod_upper > 0 else math.inf
        hi = 1.0 / self.mod_lower if self.mod_lower > 0 else math.inf
        return lo, hi

    def to_json(self) -> dict:
        lo, hi = self.lhs
        return {"theorem": self.theorem, "D": self.D, "degree_of_iterate": self.degree_of_iterate,
                "s": self.s, "Z_angles": [list(a) for a in self.Z_angles],
                "C_count": self.C_count, "B_detected": list(self.B_detected),
                "mod_lower": self.mod_lower, "mod_upper": self.mod_upper,
                "lhs": [lo, hi], "rhs": self.rhs, "verdict": self.verdict, "h": self.h,
                "config_digest": self.config_digest, "annotations": list(self.annotations)}


def certificate_from_bracket(theorem: str, mod: ModulusEstimate, n_terms: int, D: int,
                             base_degree: Optional[int] = None, s: int = 0, Z_angles=(),
                             C_count: int = 0, B_detected=(), digest: str = "",
                             annotations=()) -> Certificate:
    """Compare the 1/mod interval with n_terms * pi / log D."""
    if mod is None:
        raise PreconditionError("missing modulus bracket")
    rhs = rhs_value(n_terms, D)
    lo = 1.0 / mod.upper if mod.upper > 0 else math.inf
    hi = 1.0 / mod.lower if mod.lower > 0 else math.inf
    return Certificate(theorem, base_degree or D, D, s, tuple(tuple(a) for a in Z_angles),
                       C_count, tuple(B_detected), mod.lower, mod.upper, rhs,
                       verdict_for(lo, hi, rhs), mod.h, digest, tuple(annotations))


def _cycle_angles(Z) -> list:
    return [tuple(c.comb.to_json()) for c in Z]


def certify_nopar0(pl: PLRestriction, Z: Sequence, mod: Optional[ModulusEstimate] = None,
                   base_degree: Optional[int] = None, digest: str = "",
                   paralegal=None) -> Certificate:
    """1/mod(U0 minus U1) against pi |Z| / log D for a paralegal cut family Z."""
    if paralegal is not None and not paralegal.paralegal:
        raise PreconditionError(f"cut family is {paralegal.status}")
    if mod is None:
        mod = annulus_modulus(pl.annulus())
    return certificate_from_bracket("nopar0", mod, len(Z), pl.p.degree, base_degree,
                                    len(Z), _cycle_angles(Z), 0, (), digest,
                                    ("attachment tested on the raster filled set at "
                                     f"resolution h={pl.h!r}",))


def certify_nopar(pl: PLRestriction, Z: Sequence, extra_ray_count: int,
                  mod: Optional[ModulusEstimate] = None, B_detected=(),
                  base_degree: Optional[int] = None, digest: str = "") -> Certificate:
    """As certify_nopar0 with the extra wedge rays added; bounded Fatou terms omitted."""
    if extra_ray_count < 0:
        raise PreconditionError("extra_ray_count must be nonnegative")
    if mod is None:
        mod = annulus_modulus(pl.annulus())
    notes = ["bounded Fatou access terms omitted (weaker right-hand side)"]
    if B_detected:
        notes.append(f"{len(B_detected)} bounded Fatou accesses detected, not evaluated")
    return certificate_from_bracket("nopar", mod, len(Z) + extra_ray_count, pl.p.degree,
                                    base_degree, len(Z), _cycle_angles(Z), extra_ray_count,
                                    B_detected, digest, notes)


def period_bound(D: int, mu: float) -> int:
    """Largest cut period compatible with modulus mu: floor(log D / (mu pi))."""
    if D < 2:
        raise PreconditionError("D must be >= 2")
    if not mu >= MU_MIN:
        raise PreconditionError(f"mu must be at least {MU_MIN}")
    return int(math.floor(math.log(D) / (mu * math.pi)))


# -- degree one: modulus against the multiplier ------------------------------

def koenigs_coordinate(p: Poly, a: complex, z, close: float = 1e-6,
                       max_iter: int = 400) -> np.ndarray:
    """Linearizing coordinate of a repelling fixed point, lim lam^n (g^n(z) - a),
    g the local inverse branch fixing a, evaluated by Newton steps.

    Iteration stops once the pulled-back points are within ``close`` of a;
    the truncation error is then of relative size ``close``.
    """
    lam = complex(p.deriv_eval(a)[1])
    if abs(lam) <= 1:
        raise PreconditionError("fixed point is not repelling")
    w = np.array(z, dtype=complex)
    scale = 1.0 + 0j
    for _ in range(max_iter):
        if np.max(np.abs(w - a), initial=0.0) < close:
            break
        y = a + (w - a) / lam
        for _ in range(5):
            v, dv = p.deriv_eval(y)
            y = y - (v - w) / dv
        w = y
        scale = scale * lam
    return scale * (w - a)


def koenigs_restriction(p: Poly, a: complex, r: float, h: float,
                        shrink: float = 1.0) -> PLRestriction:
    """Degree-one restriction between linearizing disks of radii r and |lam| r.

    ``shrink`` < 1 replaces the inner disk by the one of radius shrink * r,
    which is no longer the preimage of the outer disk (a negative control).
    """
    lam = complex(p.deriv_eval(a)[1])
    R = abs(lam) * r
    g = Grid.box(a, 2.0 * R + 4 * h, h)
    z = g.centers()
    k = np.full(g.shape, np.inf)
    near = np.abs(z - a) < 2.0 * R
    k[near] = np.abs(koenigs_coordinate(p, a, z[near]))
    U0 = Region(g, k < R, label="linearizing disk (outer)").component_at(a)
    # far cells may pick the wrong inverse branch; only the component at a is used
    if np.any(U0.mask & (np.abs(z - a) > 1.8 * R)):
        raise PreconditionError("linearizing disk is not well inside the sampling box")
    U1 = Region(g, k < shrink * r, label="linearizing disk (inner)").component_at(a)
    return PLRestriction(p, U0, U1, 1, complex(a), containment_margin(U1, U0), "koenigs")


def check_mod_vs_multiplier(p: Poly, a: complex, pl: PLRestriction, tol: float = 0.02,
                            mod: Optional[ModulusEstimate] = None):
    """2 pi mod_lower <= log|p'(a)| (1 + tol); returns (certificate, tightness ratio)."""
    a = complex(a)
    scale = max(1.0, abs(a))
    if abs(p(a) - a) > 1e-9 * scale:
        raise PreconditionError(f"{a} is not a fixed point")
    lam = complex(p.deriv_eval(a)[1])
    if abs(lam) <= 1 + 1e-9:
        raise PreconditionError(f"{a} is not repelling (|multiplier| = {abs(lam)})")
    if pl.degree != 1:
        raise PreconditionError("needs a degree-one restriction")
    if mod is None:
        mod = annulus_modulus(pl.annulus())
    bound = math.log(abs(lam))
    lo, hi = 2 * math.pi * mod.lower, 2 * math.pi * mod.upper
    if hi <= bound:
        verdict = "consistent_strong"
    elif lo <= bound * (1 + tol):
        verdict = "consistent"
    else:
        verdict = "suspect"
    ratio = lo / bound
    cert = Certificate("mod_vs_multiplier", p.degree, p.degree, 1, (), 0, (), mod.lower,
                       mod.upper, bound / (2 * math.pi), verdict, mod.h, "",
                       (f"multiplier {lam!r}", f"tightness {ratio!r}"))
    return cert, ratio


# -- pipeline -----------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    h: float = 0.0015
    s_max: int = 2
    angle_cap: int = 600
    disk_radii: tuple = (0.3, 0.4, 0.25, 0.5, 0.2)
    window_iter: int = 400
    window_radius: float = 0.0
    window_interval: tuple = (-1.79, -1.755)
    window_depth: int = 6
    filled_iter: int = 48
    tol_land: float = 1e-6
    seed: int = 0
    strategies: tuple = ("disk", "equipotential")
    equipotential_level: float = 0.5
    max_cells: int = 4_000_000

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def window_check(p: Poly, n: int, basepoint: complex, cfg: PipelineConfig) -> dict:
    """Renormalization window test: the basepoint's orbit under P^n stays near
    the basepoint and P has an attracting or bounded critical orbit structure."""
    Q = iterate_poly(p, n)
    z = complex(basepoint)
    radius = cfg.window_radius or 0.5 * _gap_to_other_critical(Q, basepoint)
    far = 0.0
    for _ in range(cfg.window_iter):
        z = Q(z)
        far = max(far, abs(z - basepoint))
        if not math.isfinite(far) or far > radius:
            return {"ok": False, "max_excursion": far, "radius": radius}
    return {"ok": True, "max_excursion": far, "radius": radius}


def _gap_to_other_critical(Q: Poly, basepoint: complex) -> float:
    d = [abs(c - basepoint) for c in critical_points(Q) if abs(c - basepoint) > 1e-9]
    return min(d) if d else 1.0


def find_window_parameter(n: int, basepoint: complex, cfg: PipelineConfig):
    """Search the real quadratic interval for a parameter passing the window test,
    visiting midpoints of successively halved subintervals."""
    lo, hi = cfg.window_interval
    for depth in range(cfg.window_depth + 1):
        k = 2 ** depth
        for j in range(1, 2 * k, 2):
            c = lo + (hi - lo) * j / (2 * k)
            p = Poly.quadratic(c)
            if window_check(p, n, basepoint, cfg)["ok"]:
                return c
    return None


def _cut_candidates(p: Poly, n: int, cfg: PipelineConfig, traces: dict, workers: int = 1):
    """Co-landing pairs among angles fixed by multiplication by D^(n s), s <= s_max."""
    D = p.degree
    cuts = []
    seen = set()
    for s in range(1, cfg.s_max + 1):
        den = D ** (n * s) - 1
        if den > cfg.angle_cap:
            break
        angles = [Angle(k, den) for k in range(den)]
        missing = [th for th in angles if th not in traces]
        for th, tr in zip(missing, ordered_map(lambda th: trace_external_ray(p, th),
                                               missing, workers)):
            traces[th] = tr
        land = {}
        for th in angles:
            tr = traces[th]
            if tr.status == "landed":
                land[th] = tr.landing
        keys = sorted(land)
        for i, a in enumerate(keys):
            for b in keys[i + 1:]:
                if (a, b) in seen:
                    continue
                if abs(land[a] - land[b]) < cfg.tol_land * max(1.0, abs(land[a])):
                    seen.add((a, b))
                    try:
                        cuts.append(common_landing(p, a, b, tol=cfg.tol_land, traces=traces))
                    except (NoCommonLandingError, PreconditionError):
                        continue
    return cuts


def _orient(cut: GeoCut, basepoint: complex) -> GeoCut:
    """Choose (R, L) so that the wedge does not contain the basepoint."""
    if not point_in_wedge(cut, basepoint):
        return cut
    flipped = GeoCut(CombCut(cut.comb.thetaL, cut.comb.thetaR), cut.traceL, cut.traceR,
                     cut.vertex, cut.period, cut.multiplier, cut.kind)
    return flipped


def _cut_cycle(cut: GeoCut, Dn: int, by_comb: dict):
    """The geometric cuts of the combinatorial cycle of cut under x Dn, if all were found."""
    cyc = CombCutCycle.from_cut(cut.comb, Dn)
    out = []
    for c in cyc.cuts:
        g = by_comb.get(frozenset((c.thetaR, c.thetaL)))
        if g is None:
            return None
        out.append(GeoCut(c, *((g.traceR, g.traceL) if g.comb.thetaR == c.thetaR
                               else (g.traceL, g.traceR)),
                          g.vertex, g.period, g.multiplier, g.kind))
    return out


def _build_pl(Q: Poly, basepoint: complex, cfg: PipelineConfig, attempts: list):
    for r in cfg.disk_radii:
        U0 = disk_region(basepoint, r, cfg.h, pad=2 * cfg.h)
        try:
            pl = build_pl_restriction(Q, U0, basepoint, method=f"disk r={r!r}", seed=cfg.seed)
        except PLBoundsError as exc:
            attempts.append({"U0": f"disk r={r!r}", "error": str(exc)})
            continue
        if pl.degree >= 2:
            attempts.append({"U0": f"disk r={r!r}", "degree": pl.degree})
            return pl
        attempts.append({"U0": f"disk r={r!r}", "degree": pl.degree, "error": "degree < 2"})
    return None


def _thickening(cycle) -> float:
    """Dilation radius (in cells) that survives one pullback near the cut vertices."""
    worst = min((abs(g.multiplier) ** (1.0 / max(g.period, 1)) for g in cycle), default=2.0)
    if worst <= 1.0:
        return float("inf")
    return max(4.0, 3.0 / (1.0 - 1.0 / worst))


def _build_pl_truncated(Q: Poly, basepoint: complex, cycle, cfg: PipelineConfig,
                        attempts: list):
    """U0 = equipotential region minus the cycle's wedges, thickened by a few cells."""
    name = "equipotential-minus-wedges " + ",".join(
        f"({g.comb.thetaR},{g.comb.thetaL})" for g in cycle) if cycle else "equipotential"
    cells = _thickening(cycle)
    if not math.isfinite(cells):
        attempts.append({"U0": name, "error": "non-repelling vertex"})
        return None
    try:
        E = equipotential_region(Q, cfg.equipotential_level, cfg.h, max_cells=cfg.max_cells)
        if cycle:
            T = truncate_by_wedges(E, cycle, clearance=0.0, basepoint=basepoint)
            E = T.dilate(cells * cfg.h)
        U0 = E.with_mask(E.mask, label=name)
        pl = build_pl_restriction(Q, U0, basepoint, method=name, seed=cfg.seed)
    except PLBoundsError as exc:
        attempts.append({"U0": name, "error": str(exc)})
        return None
    if pl.degree < 2:
        attempts.append({"U0": name, "degree": pl.degree, "error": "degree < 2"})
        return None
    attempts.append({"U0": name, "degree": pl.degree})
    return pl


def _attached_cycle(cuts, K, Dn, basepoint, Q=None, U1=None):
    by_comb = {frozenset((c.comb.thetaR, c.comb.thetaL)): c for c in cuts}
    attached = [c for c in cuts if is_attached(c, K, Q, U1=U1)]
    for c in sorted(attached, key=lambda c: (CombCutCycle.from_cut(c.comb, Dn).period,
                                              abs(c.vertex - basepoint))):
        cyc = _cut_cycle(c, Dn, by_comb)
        if cyc and all(is_attached(g, K, Q, U1=U1) for g in cyc):
            return attached, cyc
    return attached, None


def _pair_cuts(p: Poly, pairs, cfg: PipelineConfig, traces: dict):
    out = []
    for a, b in pairs:
        try:
            out.append(common_landing(p, Angle.of(a), Angle.of(b), tol=cfg.tol_land,
                                      traces=traces))
        except (NoCommonLandingError, PreconditionError, PLBoundsError):
            continue
    return out


def renorm_certify_pipeline(p: Poly, n: int, basepoint: complex = 0j,
                            config: Optional[PipelineConfig] = None,
                            extra_pairs=(), workers: int = 1) -> dict:
    """Build a renormalization of P^n at the basepoint, find an attached
    invariant cut cycle, and certify the modulus inequalities.

    For real quadratics failing the window test, the parameter is moved to
    the first window found by bisection and the move is recorded. Failures
    raise StageFailure naming the stage. ``workers`` only spreads ray
    tracing over threads; it is not part of the digest.
    """
    cfg = config or PipelineConfig()
    basepoint = complex(basepoint)
    digest = config_digest({"poly": p.to_json(), "n": n, "basepoint": basepoint,
                            "config": cfg.to_json(),
                            "extra_pairs": [[str(Angle.of(a)), str(Angle.of(b))]
                                            for a, b in extra_pairs]})
    bundle = {"poly": p.to_json(), "iterate": n, "basepoint": [basepoint.real, basepoint.imag],
              "config": cfg.to_json(), "config_digest": digest}

    try:
        Q = iterate_poly(p, n)
    except DegreeOverflowError as exc:
        raise StageFailure("iterate", f"degree-overflow: {exc}") from exc

    bundle["window"] = window_check(p, n, basepoint, cfg)
    if not bundle["window"]["ok"]:
        c = _quadratic_parameter(p)
        found = None if c is None else find_window_parameter(n, basepoint, cfg)
        if found is None:
            raise StageFailure("window",
                               "basepoint orbit under the iterate leaves its neighbourhood")
        p = Poly.quadratic(found)
        Q = iterate_poly(p, n)
        bundle["window"] = dict(window_check(p, n, basepoint, cfg), moved_from=c,
                                parameter=found)
        bundle["poly"] = p.to_json()
    D = p.degree
    Dn = Q.degree

    attempts = []
    bundle["pl_attempts"] = attempts
    traces = {}
    pl = Z = None
    cuts = []
    attached = []
    if "disk" in cfg.strategies:
        pl = _build_pl(Q, basepoint, cfg, attempts)
    if pl is None and "equipotential" not in cfg.strategies:
        raise StageFailure("pl", "no polynomial-like restriction found")

    cuts = [_orient(c, basepoint)
            for c in _cut_candidates(p, n, cfg, traces, workers)
            + _pair_cuts(p, extra_pairs, cfg, traces)]
    cuts = list({frozenset((c.comb.thetaR, c.comb.thetaL)): c for c in cuts}.values())
    bundle["candidate_cuts"] = [c.to_json() for c in cuts]

    if pl is not None:
        K = filled_set(Q, pl.U1, cfg.filled_iter)
        attached, Z = _attached_cycle(cuts, K, Dn, basepoint, Q, pl.U1)
    if Z is None and "equipotential" in cfg.strategies:
        by_comb = {frozenset((c.comb.thetaR, c.comb.thetaL)): c for c in cuts}
        tried = set()
        for c in sorted(cuts, key=lambda c: abs(c.vertex - basepoint)):
            cyc = _cut_cycle(c, Dn, by_comb)
            key = frozenset(frozenset((g.comb.thetaR, g.comb.thetaL)) for g in cyc or ())
            if not cyc or key in tried:
                continue
            tried.add(key)
            cand = _build_pl_truncated(Q, basepoint, cyc, cfg, attempts)
            if cand is None:
                continue
            K = filled_set(Q, cand.U1, cfg.filled_iter)
            att, Zc = _attached_cycle(cuts, K, Dn, basepoint, Q, cand.U1)
            if Zc is not None:
                pl, attached, Z = cand, att, Zc
                break
            pl = pl or cand
        if pl is None:
            pl = _build_pl_truncated(Q, basepoint, [], cfg, attempts)
    if pl is None:
        raise StageFailure("pl", "no polynomial-like restriction found")
    bundle["pl"] = pl.to_json()
    bundle["attached_cuts"] = [c.to_json() for c in attached]
    if Z is None:
        raise StageFailure("attached", "no_attached_cuts")
    s = len(Z)

    verdict = paralegal_check(Q, Z, pl.U1, seed=cfg.seed)
    bundle["paralegal"] = verdict.to_json()
    if not verdict.paralegal:
        raise StageFailure("paralegal", verdict.status)

    mod = annulus_modulus(pl.annulus())
    bundle["modulus"] = mod.to_json()

    extra = _extra_rays(Z, traces, cfg)
    c0 = certify_nopar0(pl, Z, mod, base_degree=D, digest=digest, paralegal=verdict)
    c1 = certify_nopar(pl, Z, extra, mod, base_degree=D, digest=digest)
    bound = period_bound(Dn, max(mod.lower, MU_MIN))
    bundle["certificates"] = [c0.to_json(), c1.to_json()]
    bundle["period_check"] = {"s": s, "period_bound": bound, "ok": s <= bound}
    if s > bound:
        raise StageFailure("period", f"cut period {s} exceeds bound {bound}")
    return bundle


def _quadratic_parameter(p: Poly):
    """c when p is z^2 + c with c real, else None."""
    co = p.coefficients
    if p.degree == 2 and co[1] == 0 and co[2] == 1 and complex(co[0]).imag == 0:
        return complex(co[0]).real
    return None


def _extra_rays(Z, traces: dict, cfg: PipelineConfig) -> int:
    """Traced rays landing at a cut vertex strictly inside its wedge."""
    count = 0
    for cut in Z:
        for th, tr in sorted(traces.items()):
            if tr.status != "landed" or th in (cut.comb.thetaR, cut.comb.thetaL):
                continue
            if abs(tr.landing - cut.vertex) < cfg.tol_land * max(1.0, abs(cut.vertex)) \
                    and cut.comb.wedge_contains(th):
                count += 1
    return count
