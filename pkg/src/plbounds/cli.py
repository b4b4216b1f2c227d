"""Command-line front end.

Each subcommand resolves its parameters (defaults, then an optional JSON
config file, then explicit flags), writes its artifacts to
<out-root>/<command>-<digest>, and exits 0 on success, 1 on a stage failure
and 2 on invalid input. The worker count is not part of the digest: it must
not change any artifact.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .angles import Angle
from .artifacts import canonical_json, config_digest, run_directory, write_json, write_text
from .errors import PLBoundsError, PreconditionError, StageFailure

EXIT_OK, EXIT_STAGE, EXIT_INPUT = 0, 1, 2
NOT_DIGESTED = {"out_root", "workers", "config", "command"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise PreconditionError(message)


def _complex(text: str) -> complex:
    try:
        parts = [float(s) for s in str(text).split(",")]
    except ValueError:
        raise PreconditionError(f"expected re,im but got {text!r}") from None
    if len(parts) == 1:
        return complex(parts[0], 0.0)
    if len(parts) != 2:
        raise PreconditionError(f"expected re,im but got {text!r}")
    return complex(parts[0], parts[1])


def _load_poly(path: str):
    from .poly import Poly

    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PreconditionError(f"cannot read polynomial file {path}: {exc}") from None
    try:
        return Poly.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise PreconditionError(f"malformed polynomial file {path}: {exc}") from None


# -- subcommands ------------------------------------------------------------------

def cmd_trace_ray(a, out: Path) -> dict:
    from .rays import trace_external_ray

    p = _load_poly(a.poly)
    theta = Angle.parse(a.angle)
    tr = trace_external_ray(p, theta, t_min=a.tmin)
    write_text(out / "ray.csv", tr.to_csv())
    summary = {"angle": str(theta), "status": tr.status, "points": len(tr.points),
               "landing": tr.landing}
    write_json(out / "ray.json", summary)
    return summary


def cmd_find_periodic(a, out: Path) -> dict:
    from .poly import find_periodic_points

    p = _load_poly(a.poly)
    orbits = find_periodic_points(p, a.period)
    res = {"period": a.period, "orbits": [o.to_json() for o in orbits]}
    write_json(out / "periodic.json", res)
    return {"orbits": len(orbits)}


def cmd_build_pl(a, out: Path) -> dict:
    from .poly import iterate_poly
    from .regions import build_pl_restriction, disk_region, equipotential_region

    p = iterate_poly(_load_poly(a.poly), a.iterate)
    z0 = _complex(a.basepoint)
    if a.u0 == "disk":
        U0 = disk_region(z0, a.radius, a.h, pad=2 * a.h)
    else:
        U0 = equipotential_region(p, a.level, a.h)
    try:
        pl = build_pl_restriction(p, U0, z0, method=a.u0)
    except PLBoundsError as exc:
        raise StageFailure("pl", str(exc)) from exc
    pl.U0.save(out / "U0")
    pl.U1.save(out / "U1")
    write_text(out / "U1_boundary.csv", pl.U1.boundary_csv())
    write_json(out / "pl.json", pl.to_json())
    return {"degree": pl.degree, "margin": pl.margin}


def cmd_modulus(a, out: Path) -> dict:
    from .extremal import annulus_modulus, round_annulus
    from .regions import Region

    if a.annulus == "round":
        if a.r1 is None or a.r2 is None:
            raise PreconditionError("--annulus round needs --r1 and --r2")
        A = round_annulus(a.r1, a.r2, a.n_radial, a.n_angular)
    elif a.annulus == "region":
        if not a.region:
            raise PreconditionError("--annulus region needs --region STEM")
        A = Region.load(a.region)
    else:
        raise PreconditionError(f"unknown annulus kind {a.annulus!r}")
    mod = annulus_modulus(A)
    res = mod.to_json()
    if a.annulus == "round":
        res["exact"] = math.log(a.r2 / a.r1) / (2 * math.pi)
    write_json(out / "modulus.json", res)
    return res


def _pipeline_config(a):
    from .certify import PipelineConfig

    return PipelineConfig(**{k: v for k, v in (("h", a.h), ("s_max", a.s_max),
                                                ("seed", a.seed)) if v is not None})


def _emit_bundle(bundle: dict, out: Path) -> dict:
    write_json(out / "bundle.json", bundle)
    write_json(out / "certificates.json", bundle["certificates"])
    return {"verdicts": [c["verdict"] for c in bundle["certificates"]]}


def cmd_certify(a, out: Path) -> dict:
    from .certify import renorm_certify_pipeline

    p = _load_poly(a.poly)
    bundle = renorm_certify_pipeline(p, a.iterate, _complex(a.basepoint), _pipeline_config(a),
                                     workers=a.workers)
    return _emit_bundle(bundle, out)


def cmd_renorm(a, out: Path) -> dict:
    from .certify import PipelineConfig
    from .cubic import CubicParams, immediate_renorm_attempt

    params = CubicParams(_complex(a.lam), _complex(a.b))
    pairs = []
    for w in a.wake or ():
        t1, t2 = w.split(",")
        pairs.append((Angle.parse(t1), Angle.parse(t2)))
    cfg = PipelineConfig(h=a.h or 0.006, s_max=a.s_max or 2, seed=a.seed or 0,
                         disk_radii=(), strategies=("equipotential",))
    bundle = immediate_renorm_attempt(params, cfg, wake_pairs=pairs, workers=a.workers)
    return _emit_bundle(bundle, out)


def cmd_slice(a, out: Path) -> dict:
    import numpy as np

    from .cubic import parameter_ray, raster_png_bytes, slice_grid, slice_rasters

    lam = _complex(a.lam)
    if abs(lam) > 1:
        raise PreconditionError("|lambda| must be at most 1")
    w = [float(s) for s in a.window.split(",")]
    if len(w) != 3 or w[2] <= 0:
        raise PreconditionError("--window expects centre_re,centre_im,half_width")
    if a.res < 2:
        raise PreconditionError("--res must be at least 2")
    bs = slice_grid(complex(w[0], w[1]), w[2], a.res)
    conn, ph = slice_rasters(lam, bs, a.max_iter, a.ph_iter, workers=a.workers)
    formats = set(a.out.split(","))
    if "png" in formats:
        (out / "connectedness.png").write_bytes(raster_png_bytes(conn))
        (out / "principal_hyperbolic.png").write_bytes(raster_png_bytes(ph))
    if "npy" in formats:
        np.save(out / "connectedness.npy", conn)
        np.save(out / "principal_hyperbolic.npy", ph)
    counts = {"connectedness": np.bincount(conn.ravel(), minlength=3).tolist(),
              "principal_hyperbolic": np.bincount(ph.ravel(), minlength=3).tolist()}
    rays = []
    for th in a.rays or ():
        r = parameter_ray(lam, Angle.parse(th), t_min=a.ray_tmin)
        name = f"ray_{r.angle.p}_{r.angle.q}.csv"
        write_text(out / name, r.to_csv())
        rays.append({"angle": str(r.angle), "status": r.status, "file": name})
    meta = {"lambda": lam, "window": w, "res": a.res,
            "palette": {"out": 0, "undecided": 128, "in": 255},
            "orientation": "row 0 is the largest imaginary part", "counts": counts,
            "rays": rays}
    write_json(out / "slice.json", meta)
    return counts


def cmd_harness(a, out: Path) -> dict:
    from .extremal import el_law_harness

    rep = el_law_harness(a.n_configs, a.seed or 0, a.cells, a.tolerance, a.workers)
    write_json(out / "harness.json", rep.to_json())
    if rep.violations:
        raise StageFailure("harness", f"{rep.violations} violations")
    return {"configs": rep.configs, "violations": rep.violations}


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plbounds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--config", help="JSON file whose keys mirror the flags")
        sp.add_argument("--out-root", help="output root (default from PLBOUNDS_OUTPUT_ROOT)")
        sp.add_argument("--workers", type=int, default=1)
        return sp

    sp = add("trace-ray", cmd_trace_ray, "trace an external ray")
    sp.add_argument("--poly")
    sp.add_argument("--angle")
    sp.add_argument("--tmin", type=float, default=1e-8)

    sp = add("find-periodic", cmd_find_periodic, "periodic orbits and multipliers")
    sp.add_argument("--poly")
    sp.add_argument("--period", type=int, default=1)

    sp = add("build-pl", cmd_build_pl, "polynomial-like restriction")
    sp.add_argument("--poly")
    sp.add_argument("--iterate", type=int, default=1)
    sp.add_argument("--basepoint", default="0,0")
    sp.add_argument("--u0", choices=("disk", "equipotential"), default="equipotential")
    sp.add_argument("--radius", type=float, default=0.3)
    sp.add_argument("--level", type=float, default=0.5)
    sp.add_argument("--h", type=float, default=0.005)

    sp = add("modulus", cmd_modulus, "modulus bracket of an annulus")
    sp.add_argument("--annulus", default="round")
    sp.add_argument("--r1", type=float)
    sp.add_argument("--r2", type=float)
    sp.add_argument("--n-radial", type=int, default=64)
    sp.add_argument("--n-angular", type=int, default=256)
    sp.add_argument("--region", help="PNG+JSON stem of a raster annulus")

    for name, func, text in (("certify", cmd_certify, "renormalization certificates"),):
        sp = add(name, func, text)
        sp.add_argument("--poly")
        sp.add_argument("--iterate", type=int, default=1)
        sp.add_argument("--basepoint", default="0,0")
        sp.add_argument("--h", type=float)
        sp.add_argument("--s-max", type=int)
        sp.add_argument("--seed", type=int)

    sp = add("renorm", cmd_renorm, "immediate renormalization of a cubic")
    sp.add_argument("--lambda", dest="lam", default="0,0")
    sp.add_argument("--b", default="0,0")
    sp.add_argument("--wake", action="append", help="wake angle pair p/q,p/q (repeatable)")
    sp.add_argument("--h", type=float)
    sp.add_argument("--s-max", type=int)
    sp.add_argument("--seed", type=int)

    sp = add("slice", cmd_slice, "cubic lambda-slice rasters")
    sp.add_argument("--lambda", dest="lam", default="0,0")
    sp.add_argument("--window", default="0,0,2.5")
    sp.add_argument("--res", type=int, default=512)
    sp.add_argument("--out", default="png", help="comma list of png, npy")
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--ph-iter", type=int, default=2000)
    sp.add_argument("--rays", action="append", help="parameter ray angle p/q (repeatable)")
    sp.add_argument("--ray-tmin", type=float, default=1e-3)

    sp = add("harness", cmd_harness, "extremal-length law harness")
    sp.add_argument("--n-configs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cells", type=int, default=16)
    sp.add_argument("--tolerance", type=float, default=0.02)
    return parser


REQUIRED = {"trace-ray": ("poly", "angle"), "find-periodic": ("poly",), "build-pl": ("poly",),
            "certify": ("poly",)}


def _config_tokens(sub: argparse.ArgumentParser, cfg: dict, explicit: set) -> list:
    """Config entries as flag tokens, so they go through the same type checks."""
    options = {a.dest: a for a in sub._actions if a.option_strings}
    tokens = []
    for key, value in cfg.items():
        dest = "lam" if key == "lambda" else key.replace("-", "_")
        action = options.get(dest)
        if action is None or dest in ("config", "help"):
            raise PreconditionError(f"unknown config key {key!r}")
        if dest in explicit:
            continue
        flag = action.option_strings[-1]
        values = value if isinstance(value, list) and action.nargs is None \
            and isinstance(action, argparse._AppendAction) else [value]
        for v in values:
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            tokens += [flag, str(v)]
    return tokens


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PreconditionError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise PreconditionError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        explicit = {a.dest for a in sub._actions
                    if any(tok == o or tok.startswith(o + "=") for o in a.option_strings
                           for tok in argv)}
        args = parser.parse_args([args.command] + _config_tokens(sub, cfg, explicit) + argv[1:])
    for key in REQUIRED.get(args.command, ()):
        if getattr(args, key) in (None, ""):
            raise PreconditionError(f"--{key} is required")
    return args


def _digest_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in NOT_DIGESTED and k != "func"}
    if getattr(args, "poly", None):
        cfg["poly"] = _load_poly(args.poly).to_json()
    return {"command": args.command, "args": cfg}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    out = None
    try:
        args = parse(argv)
        cfg = _digest_config(args)
        out = run_directory(args.command, cfg, args.out_root)
        write_json(out / "config.json", cfg)
        summary = args.func(args, out)
    except StageFailure as exc:
        if out is not None:
            write_json(out / "failure.json", {"stage": exc.stage, "message": exc.message})
        print(f"stage failed: {exc.stage}: {exc.message}", file=sys.stderr)
        return EXIT_STAGE
    except (PreconditionError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PLBoundsError as exc:
        print(f"stage failed: {args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(canonical_json({"output": str(out), "digest": config_digest(cfg),
                          "summary": summary}), end="")
    return EXIT_OK


def main():
    sys.exit(run())
