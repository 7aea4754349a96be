"""Command line front end.

    transborel coeffs     --preset euler --order 20
    transborel borel-sum  --preset cubic --x 10@pi/6 --exp-order 2 --C 1
    transborel stokes     --preset cubic --x 10
    transborel decompose  --order 80 --seed 0
    transborel kernel     --zeta1 1,2 --zeta2 0.5,1,2
    transborel verify     --preset cubic --order 25 --exp-order 3

Exit codes: 0 success, 2 configuration error, 3 certificate failure,
4 consistency failure.  Every output file starts with the hash of the
resolved configuration; no timestamps are written, so identical
configurations give identical files.
"""
from __future__ import annotations

import argparse
import cmath
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from fractions import Fraction

import numpy as np

from . import borel as B
from . import formal_ode as FO
from . import multisum as MS

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_CONSIST = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class ConsistencyError(Exception):
    pass


def _complex(s: str) -> complex:
    """Complex number, or polar 'r@angle' with angle an expression in pi (10@pi/6)."""
    s = s.strip().replace(" ", "")
    if "@" in s:
        r, ang = s.split("@", 1)
        if not re.fullmatch(r"[0-9.+\-*/()pie]*", ang):
            raise ConfigError(f"bad polar angle {ang!r}")
        return float(r) * cmath.exp(1j * float(eval(ang, {"__builtins__": {}}, {"pi": math.pi})))
    try:
        return complex(s.replace("i", "j"))
    except ValueError:
        raise ConfigError(f"cannot parse number {s!r}")


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def config_of(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config") and v is not None}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg.update(json.load(fh))
    return cfg


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(keep, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _emit(cfg, name, text, header=True):
    h = config_hash(cfg)
    body = (f"# config_hash={h}\n" if header else "") + text
    out = cfg.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, name)
        with open(path, "w", newline="") as fh:
            fh.write(body)
        print(f"wrote {path}")
    else:
        sys.stdout.write(body)


def _emit_json(cfg, name, obj):
    obj = dict(obj)
    obj["config_hash"] = config_hash(cfg)
    obj["config"] = {k: v for k, v in cfg.items() if k != "out"}
    _emit(cfg, name, json.dumps(B._jsonable(obj), indent=2, sort_keys=True) + "\n", header=False)


def _equation(cfg):
    src = cfg.get("eq") or cfg.get("preset")
    if not src:
        raise ConfigError("give --preset NAME or --eq FILE.json")
    try:
        if cfg.get("eq"):
            return FO.load_equation(src)
        params = cfg.get("params") or {}
        return FO.preset(src, **params)
    except FO.FormalODEError as e:
        raise ConfigError(str(e))
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"cannot read equation {src!r}: {e}")


def _positive(cfg, *keys):
    for k in keys:
        v = cfg.get(k)
        if v is not None and not (float(v) > 0):
            raise ConfigError(f"--{k.replace('_', '-')} must be positive (got {v})")


# ---------------------------------------------------------------- commands


def cmd_coeffs(cfg):
    _positive(cfg, "order")
    N = int(cfg.get("order", 20))
    K = int(cfg.get("exp_order", 0))
    eq = _equation(cfg)
    if isinstance(eq, FO.NormalFormScalarODE):
        if K == 0:
            c = FO.solve_power_series(eq, N)
            rep = FO.verify_formal_solution(eq, c, N)
            text = FO.coefficients_csv(c, start=1)
        else:
            fam = FO.solve_exponential_corrections(eq, K, N)
            rep = FO.verify_formal_solution(eq, fam, N)
            text = fam.to_csv()
    else:
        sysn = getattr(eq, "system", None) if isinstance(eq, FO.SecondOrderEquation) else eq
        if sysn is None:
            if (eq.name or "") == "erfmix":
                # the 2x f' term needs c_{N+1} to check order N
                c = MS.recrel_coeffs(max(N + 1, 3)).coeffs
                rep = FO.verify_formal_solution(eq, c, N)
                text = FO.coefficients_csv(c[:N + 1], start=1)
            else:
                raise ConfigError("equation has no normal form to expand")
        else:
            fam = FO.solve_system_transseries(sysn, float(cfg.get("angle", 0.0)), K, N)
            rep = FO.verify_formal_solution(sysn, fam, N)
            text = fam.to_csv()
    _emit(cfg, "coeffs.csv", text)
    print(f"residual orders: {rep.orders}  (ok: {rep.ok})", file=sys.stderr)
    if not rep.ok:
        raise ConsistencyError(f"formal residual check failed: {rep}")


def _scalar(cfg):
    eq = _equation(cfg)
    if not isinstance(eq, FO.NormalFormScalarODE):
        raise ConfigError("this command needs a scalar normal form equation")
    return eq


def cmd_borel_sum(cfg):
    _positive(cfg, "step", "nu")
    eq = _scalar(cfg)
    xs = [_complex(s) for s in str(cfg.get("x", "5")).split(",")]
    K = int(cfg.get("exp_order", 0))
    C = _complex(str(cfg.get("C", "0")))
    h = float(cfg.get("step", B.H_DEFAULT))
    angle = cfg.get("angle")
    angle = -cmath.phase(xs[0]) if angle is None else float(angle)
    branch = cfg.get("branch")
    nu = cfg.get("nu")
    cert = B.contraction_certificate(eq, angle if not branch else
                                     B._resolve_ray(eq, angle, branch, B.LATERAL)[0],
                                     float(nu)) if nu else None
    if cert is not None and not cert["ok"]:
        raise B.CertificateError(f"contraction certificate fails at nu = {nu}: K = {cert['K']:.4g}")
    Ys = B.continue_sectors(eq, K, angle, h, None, branch, float(nu) if nu else None,
                            float(cfg.get("p_max", 16.0)))
    Y0 = Ys[0]
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["re_x", "im_x", "re_f", "im_f", "error_bound", "residual", "nu", "K_nu"])
    worst = 0.0
    for x in xs:
        f, err = B.sum_transseries(x, C, Ys, eq, detail=True)
        res = B.residual_check(lambda z: B.sum_transseries(z, C, Ys, eq), eq, [x])
        worst = max(worst, res)
        w.writerow([repr(x.real), repr(x.imag), repr(f.real), repr(f.imag), repr(float(err)), repr(float(res)),
                    Y0.nu, Y0.cert.get("K")])
    _emit(cfg, "borel_sum.csv", rows.getvalue())
    print(f"nu = {Y0.nu}, K(nu) = {Y0.cert.get('K'):.4g}, path: {Y0.cert.get('path')}, "
          f"max residual {worst:.3g}", file=sys.stderr)
    tol = cfg.get("tol")
    if tol is not None and worst > float(tol):
        raise ConsistencyError(f"residual {worst:.3g} above tolerance {tol}")


def cmd_stokes(cfg):
    eq = _scalar(cfg)
    if cfg.get("exp_order") is not None and int(cfg["exp_order"]) < 1:
        raise ConfigError("stokes needs the sector-1 transform Y1 (use --exp-order >= 1)")
    if complex(eq.lam) != 1:
        raise ConfigError("stokes expects lambda normalized to 1")
    x = _complex(str(cfg.get("x", "10"))).real
    h = float(cfg.get("step", B.H_DEFAULT))
    est = B.stokes_measure(eq, x=x, h=h)
    d = est.to_dict()
    _emit_json(cfg, "stokes.json", d)
    print(f"S1 (Borel-plane fit) = {est.S1:.10g}\nS1 (lateral jump)    = {est.S1_route2:.10g}\n"
          f"relative difference  = {est.agreement:.3g}", file=sys.stderr)
    if est.agreement is not None and abs(est.S1) > 1e-6 and est.agreement > 0.05:
        raise ConsistencyError(f"Stokes constant estimates disagree by {est.agreement:.3g}")


def cmd_decompose(cfg):
    N = int(cfg.get("order", 80))
    seed = int(cfg.get("seed", 0))
    bounds = cfg.get("bounds")
    if bounds is not None:
        v = _floats(bounds) if isinstance(bounds, str) else [float(t) for t in bounds]
        if len(v) != 4 or not (v[0] < v[1] and v[2] < v[3]):
            raise ConfigError(f"--bounds needs alo,ahi,blo,bhi with lo < hi (got {bounds})")
        bounds = ((v[0], v[1]), (v[2], v[3]))
    else:
        bounds = ((-5.0, 5.0), (-5.0, 5.0))
    force = cfg.get("force")
    if force is not None:
        fv = [Fraction(t) for t in (force.split(",") if isinstance(force, str) else force)]
        force = (fv[0], fv[1])
    try:
        dec = MS.decompose(N, bounds, seed, force)
    except MS.DecompositionError as e:
        raise ConsistencyError(str(e))
    out = dec.to_dict()
    out["reconstruction_exact"] = dec.reconstruction_exact()
    _emit_json(cfg, "decompose.json", out)
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["n", "original", "part1", "part2"])
    orig = MS.recrel_coeffs(N).coeffs
    for n in range(N + 1):
        w.writerow([n, float(orig[n]), float(dec.part1[n]), float(dec.part2[n])])
    if cfg.get("out"):
        _emit(cfg, "decompose_parts.csv", rows.getvalue())
    print(f"a = {float(dec.a):.15g}, b = {dec.b}, theta1 = {dec.theta1}, theta2 = {dec.theta2:.4f}",
          file=sys.stderr)
    if not out["reconstruction_exact"]:
        raise ConsistencyError("part1 + part2 does not reproduce the series")


def cmd_kernel(cfg):
    z1s = _floats(cfg.get("zeta1", "1,2"))
    z2s = _floats(cfg.get("zeta2", "0.25,0.5,1,2,4"))
    alpha = float(cfg.get("alpha", 0.5))
    params = MS.AccelKernelParams(alpha)
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["zeta1", "zeta2", "C", "error_estimate", "closed_form"])
    for a in z1s:
        for b in z2s:
            v, e = MS.accel_kernel(a, b, params, detail=True)
            cf = float(MS.accel_kernel_half(a, b)) if alpha == 0.5 else ""
            w.writerow([a, b, repr(v), repr(e), repr(cf) if cf != "" else ""])
    _emit(cfg, "kernel.csv", rows.getvalue())


def cmd_verify(cfg):
    """Formal residual of the preset (and the Borel-plane identity for erfmix)."""
    name = cfg.get("preset") or ""
    if name == "erfmix":
        rep = MS.verify_borelt1(int(cfg.get("order", 30)))
        _emit_json(cfg, "verify.json", rep)
        return
    cfg = dict(cfg)
    cfg.setdefault("order", 20)
    cmd_coeffs(cfg)


# ---------------------------------------------------------------- parser


def build_parser():
    ap = argparse.ArgumentParser(prog="transborel", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset")
        p.add_argument("--eq", help="equation JSON file")
        p.add_argument("--config", help="JSON file overriding the flags")
        p.add_argument("--order", type=int)
        p.add_argument("--exp-order", dest="exp_order", type=int)
        p.add_argument("--angle", type=float)
        p.add_argument("--step", type=float)
        p.add_argument("--nu", type=float)
        p.add_argument("--x")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        return p

    p = common(sub.add_parser("coeffs", help="formal coefficients as CSV"))
    p.set_defaults(func=cmd_coeffs)
    p = common(sub.add_parser("borel-sum", help="Borel-Laplace sum and residuals"))
    p.add_argument("--C", default=None)
    p.add_argument("--branch", choices=["+", "-"])
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_borel_sum)
    p = common(sub.add_parser("stokes", help="Stokes constant from two routes"))
    p.set_defaults(func=cmd_stokes)
    p = common(sub.add_parser("decompose", help="two-level decomposition of the erfmix series"))
    p.add_argument("--bounds")
    p.add_argument("--force")
    p.set_defaults(func=cmd_decompose)
    p = common(sub.add_parser("kernel", help="acceleration kernel grid"))
    p.add_argument("--zeta1")
    p.add_argument("--zeta2")
    p.add_argument("--alpha")
    p.set_defaults(func=cmd_kernel)
    p = common(sub.add_parser("verify", help="residual checks for a preset"))
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = config_of(args)
        cfg["command"] = args.command
        args.func(cfg)
    except (ConfigError, FO.ShapeError, B.SingularRayError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (B.CertificateError, B.MarginError) as e:
        print(f"certificate failure: {e}", file=sys.stderr)
        return EXIT_CERT
    except (ConsistencyError, B.ResurgenceFitError, MS.MultisumError, B.BorelError) as e:
        print(f"consistency failure: {e}", file=sys.stderr)
        return EXIT_CONSIST
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
