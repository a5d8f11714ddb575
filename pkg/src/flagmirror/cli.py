"""Command line entry point: ``flagmirror <group> <command> [options]``.

Exit codes: 0 success, 1 a check failed, 2 invalid input, 3 budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .algebra import MultiPoly, Rational
from .errors import BudgetExceeded, CheckFailure, DegenerateInput

SYMBOLIC_BUDGET = 3

ANCHORS = {
    "delta": "characteristic polynomial of the Toda matrix",
    "toda-commuting": "quantized Toda integrals commute with the Hamiltonian and each other",
    "grading": "weighted homogeneity of the integrals and the continued fraction",
    "ring": "quantum cohomology ring presented by the Toda integrals",
    "degree-two": "degree-two quantum products of the divisor classes",
    "frobenius": "Frobenius property of the quantum product",
    "classical-limit": "quantum product at q = 0 is the cup product",
    "fiber": "fiber of the Lagrangian variety over q",
    "residue-check": "residue formula for the quantum pairing",
    "critical-points": "number of critical points equals the rank of cohomology",
    "lagrangian": "critical points generate the Lagrangian variety of the Toda lattice",
    "critical-values": "critical values equal the sum of twice the diagonal currents",
    "amplitude": "amplitude matrices factor as A = UV, B = VU",
    "hessian-jacobian": "Hessian of the potential versus the Jacobian of the integrals",
    "series": "solution series of the quantum differential equation",
    "hamiltonian-annihilates": "the Hamiltonian annihilates the solution series",
    "integrals-annihilate": "all quantized integrals annihilate the solution series",
    "recursion-rank": "positivity of the form (d, d) and uniqueness of solutions",
    "independence": "the solution series span a space of dimension rk H*",
    "cpn": "projective space series and its differential equation",
    "torus": "oscillating integral over a compact torus cycle",
    "bessel": "torus integral for n = 1 equals the modified Bessel series",
    "span-fit": "torus integral lies in the span of the solution series",
    "saddle": "stationary phase asymptotics of the n = 1 integral",
    "verify-all": "all checks",
}

COMMON = {
    "n": int,
    "q": str,
    "hbar": float,
    "order": int,
    "grid": int,
    "seed": int,
    "format": str,
    "profile": str,
}


class InputError(ValueError):
    pass


# -- helpers -------------------------------------------------------------

def parse_complex(text):
    """Parse '0.3', '-1.5e-1-2i', 'i' style numbers."""
    s = text.strip().replace(" ", "").replace("I", "i").replace("j", "i")
    if not s:
        raise InputError("empty number")
    if s in ("i", "+i", "-i"):
        s = s.replace("i", "1i")
    s = s.replace("+i", "+1i").replace("-i", "-1i")
    try:
        return complex(s.replace("i", "j"))
    except ValueError as exc:
        raise InputError(f"cannot parse complex number {text!r}") from exc


def parse_qlist(text, n):
    if text is None:
        raise InputError("--q is required")
    vals = [parse_complex(x) for x in str(text).split(",") if x.strip()]
    if len(vals) == 1 and n > 1:
        vals = vals * n
    if len(vals) != n:
        raise InputError(f"--q needs {n} values, got {len(vals)}")
    if any(v == 0 for v in vals):
        raise InputError("all q_i must be nonzero")
    return np.array(vals)


def read_config(path):
    """Key = value lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in COMMON:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        val = val.strip("'\"")
        try:
            out[key] = COMMON[key](val)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key}") from exc
    return out


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Rational):
        return str(obj) if obj.denominator != 1 else int(obj)
    if isinstance(obj, MultiPoly):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def finish(report, check, seed, t0):
    report = dict(report)
    report["check"] = report.get("check", check)
    report.setdefault("status", "pass")
    report.setdefault("residual", 0)
    report["paper_anchor"] = ANCHORS.get(report["check"], ANCHORS.get(check, check))
    report["runtime_ms"] = round((time.perf_counter() - t0) * 1000, 3)
    report["seed"] = seed
    return report


def emit(report, fmt, out):
    data = jsonable(report)
    if fmt == "json":
        out.write(json.dumps(data, sort_keys=True, indent=2) + "\n")
        return
    buf = io.StringIO()
    rows = data.get("rows")
    if isinstance(rows, list) and rows and isinstance(rows[0], dict):
        keys = sorted({k for r in rows for k in r})
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    else:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k in sorted(data):
            v = data[k]
            w.writerow([k, json.dumps(v, sort_keys=True) if isinstance(v, (list, dict)) else v])
    out.write(buf.getvalue())


def need_n(args, cap=SYMBOLIC_BUDGET, low=1):
    n = args.n
    if n is None:
        raise InputError("--n is required")
    if n < low or n > cap:
        raise InputError(f"--n {n} is outside {low} <= n <= {cap} (symbolic budget n <= {SYMBOLIC_BUDGET})")
    return n


# -- commands ------------------------------------------------------------

def cmd_toda_delta(args):
    from .toda import build_delta, conserved

    n = need_n(args, cap=6, low=0)
    Ds = conserved(n)
    return {"check": "delta", "n": n, "delta": str(build_delta(n)), "D": {f"D_{m}": str(D) for m, D in enumerate(Ds)}}


def cmd_toda_check(args):
    from .toda import check_grading_and_fraction, check_commuting

    n = need_n(args)
    rep = check_commuting(n, pairwise=n <= 2 or args.pairwise)
    rep["grading"] = check_grading_and_fraction(n)["status"]
    return rep


def cmd_qh_ring(args):
    from .cohomology import classical_ring, quantum_ring

    n = need_n(args)
    ring = classical_ring(n) if args.classical else quantum_ring(n)
    names = [str(ring.to_poly(ring.basis_element(k))) for k in range(len(ring.basis))]
    rank = len(ring.basis)
    if rank != math.factorial(n + 1):
        raise CheckFailure("ring", f"rank {rank} != {(n + 1)}!")
    return {"check": "ring", "n": n, "quantum": not args.classical, "rank": rank, "graded_dims": ring.graded_dims, "basis": names}


def cmd_qh_product(args):
    from .cohomology import CohClass, classical_ring, quantum_ring

    n = need_n(args)
    ring = classical_ring(n) if args.classical else quantum_ring(n)
    try:
        a, b = CohClass.from_poly(ring, args.a), CohClass.from_poly(ring, args.b)
    except (SyntaxError, KeyError, ValueError) as exc:
        raise InputError(f"cannot parse class: {exc}") from exc
    return {"check": "ring", "n": n, "a": args.a, "b": args.b, "product": str(a * b)}


def cmd_qh_fiber(args):
    from .cohomology import fiber_points

    n = need_n(args)
    q = parse_qlist(args.q, n)
    pts = fiber_points(n, q, seed=args.seed)
    return {"check": "fiber", "n": n, "q": q, "count": len(pts), "points": pts}


def cmd_qh_residue(args):
    from .cohomology import check_residue, residue_sign

    n = need_n(args)
    qs = [parse_qlist(args.q, n)] if args.q else None
    sign = -residue_sign(n) if args.inject_sign_error else None
    return check_residue(n, qs=qs, seed=args.seed, sign=sign)


def cmd_qh_degree_two(args):
    from .cohomology import check_classical_limit, check_degree_two, check_frobenius

    n = need_n(args)
    rep = check_degree_two(n)
    rep["classical_limit"] = check_classical_limit(n)["status"]
    rep["frobenius"] = check_frobenius(n, samples=10, seed=args.seed)["status"]
    return rep


def cmd_mirror_crit(args):
    from .mirror import find_critical_points

    n = need_n(args)
    q = parse_qlist(args.q, n)
    pts = find_critical_points(n, q, seed=args.seed)
    return {"check": "critical-points", "n": n, "q": q, "count": len(pts), "points": [p.as_dict() for p in pts]}


def cmd_mirror_check(args):
    from .mirror import check_lagrangian, check_critical_values, find_critical_points, hessian_jacobian_check

    n = need_n(args)
    q = parse_qlist(args.q, n)
    pts = find_critical_points(n, q, seed=args.seed)
    c1 = check_lagrangian(pts, q, seed=args.seed)
    c2 = check_critical_values(pts, q)
    out = {"check": "lagrangian", "n": n, "count": len(pts), "lagrangian": c1, "critical-values": c2,
           "residual": max(c1["residual"], c2["residual"])}
    if args.all:
        out["hessian_jacobian"] = hessian_jacobian_check(n, q, points=pts)
    return out


def cmd_mirror_amplitude(args):
    from .mirror import amplitude_check

    n = need_n(args, cap=4)
    return amplitude_check(n)


def cmd_series_compute(args):
    from .series import all_S, check_hamiltonian, check_integrals, compute_s, h_windows, recursion_rank_check

    n = need_n(args)
    order = 3 if args.order is None else args.order
    data = compute_s(n, order)
    out = {"check": "series", "n": n, "order": order, "s": data.table(), "h_windows": h_windows(data)}
    if args.check:
        if args.check == "recursion-rank":
            out.update(recursion_rank_check(n, order))
        else:
            series = all_S(data)
            fn = check_hamiltonian if args.check == "hamiltonian" else check_integrals
            out.update(fn(n, order, data=data, series=series))
    return out


def cmd_series_cpn(args):
    from .series import projective_series

    N = args.N
    if N is None or not 1 <= N <= 6:
        raise InputError("--N must satisfy 1 <= N <= 6")
    order = 5 if args.order is None else args.order
    ps = projective_series(N, order)
    comp = {}
    for d, poly in sorted(ps.component(0).items()):
        comp[str(d)] = {f"L^{k}*h^{h}": v for (k, h), v in sorted(poly.items())}
    return {"check": "cpn", "N": N, "order": order, "status": "pass", "residual": 0, "unit_component": comp}


def cmd_integral_torus(args):
    from .integrals import bessel_reference, torus_integral

    n = need_n(args, cap=2)
    q = parse_qlist(args.q, n)
    hbar = 1.0 if args.hbar is None else args.hbar
    grid = args.grid or (256 if n == 1 else 64)
    radii = [float(x) for x in args.radii.split(",")] if args.radii else None
    val = torus_integral(n, q, hbar, radii=radii, grid=grid)
    out = {"check": "torus", "n": n, "q": q, "hbar": hbar, "grid": grid, "value": val}
    if n == 1:
        ref = bessel_reference(q[0], hbar)
        out.update(check="bessel", reference=ref, residual=abs(val - ref))
        if not abs(val - ref) < 1e-10 * max(1.0, abs(ref)):
            out["status"] = "fail"
    return out


def cmd_integral_span(args):
    from .integrals import sample_points, span_fit
    from .series import all_S, compute_s

    n = need_n(args, cap=2)
    order = 6 if args.order is None else args.order
    k = args.samples or 2 * math.factorial(n + 1)
    grid = args.grid or 64
    data = compute_s(n, order)
    return span_fit(n, sample_points(n, k, seed=args.seed), all_S(data), grid=grid)


def cmd_integral_saddle(args):
    from .integrals import saddle_check

    q = parse_complex(args.q).real if args.q else 0.25
    return saddle_check(q=q, grid=args.grid or 512)


# -- verify-all ----------------------------------------------------------

def _sections(profile, seed, inject):
    from . import cohomology as coh
    from . import integrals, mirror, series, toda

    rng = np.random.default_rng(seed)

    def rand_q(n):
        return rng.uniform(0.1, 2.0, n) * np.exp(1j * rng.uniform(-np.pi, np.pi, n))

    full = profile == "full"
    ns = (1, 2, 3) if full else (1, 2)

    def sec_toda():
        return [toda.check_commuting(n, pairwise=n <= 2) for n in ns] + [toda.check_grading_and_fraction(n) for n in ns]

    def sec_ring():
        out = []
        for n in ns:
            r = coh.quantum_ring(n)
            if len(r.basis) != math.factorial(n + 1):
                raise CheckFailure("ring", f"rank {len(r.basis)} for n={n}")
            out += [coh.check_degree_two(n), coh.check_classical_limit(n)]
        return out

    def sec_series():
        out = []
        plan = [(1, 4), (2, 3), (3, 2)] if full else [(1, 3), (2, 3)]
        for n, order in plan:
            data = series.compute_s(n, order)
            S = series.all_S(data)
            out += [series.check_hamiltonian(n, order, data, S), series.check_integrals(n, order, data, S)]
        return out

    def sec_crit():
        out = []
        for n in ns:
            q = rand_q(n)
            pts = mirror.find_critical_points(n, q, seed=seed)
            out.append(mirror.check_lagrangian(pts, q, seed=seed))
        return out

    def sec_currents():
        out = []
        for n in ns:
            q = rand_q(n)
            out.append(mirror.check_critical_values(mirror.find_critical_points(n, q, seed=seed), q))
        return out

    def sec_bessel():
        val = integrals.torus_integral(1, [0.3], 1.0, grid=256)
        ref = integrals.bessel_reference(0.3, 1.0)
        err = abs(val - ref)
        if not err < 1e-10:
            raise CheckFailure("bessel", f"torus integral differs from the Bessel series by {err:.3e}", err)
        return [{"check": "bessel", "status": "pass", "residual": err, "value": val}]

    def sec_amplitude():
        return [mirror.amplitude_check(n) for n in (range(1, 5) if full else range(1, 4))]

    def sec_residue():
        sign = None
        out = []
        for n in (1, 2):
            if inject == "residue-sign":
                sign = -coh.residue_sign(n)
            out.append(coh.check_residue(n, seed=seed, sign=sign))
        return out

    def sec_hessian():
        return [mirror.hessian_jacobian_check(n, rand_q(n), seed=seed) for n in (1, 2)]

    def sec_span():
        data = series.compute_s(2, 6)
        rep = integrals.span_fit(2, integrals.sample_points(2, 12, seed=seed), series.all_S(data), grid=64)
        if rep["status"] != "pass":
            raise CheckFailure("span-fit", f"relative residual {rep['residual']:.3e}", rep["residual"])
        return [rep]

    def sec_recursion():
        return [series.recursion_rank_check(n, 4) for n in (1, 2)] + [series.independence_check(n) for n in (1, 2, 3)]

    def sec_cpn():
        return [series._check_projective(series.projective_series(N, 5, check=False)) for N in range(1, 5)]

    def sec_frobenius():
        return [coh.check_frobenius(n, samples=15, seed=seed) for n in ns]

    def sec_saddle():
        return [integrals.saddle_check()]

    secs = [
        ("toda-commuting", sec_toda),
        ("degree-two", sec_ring),
        ("integrals-annihilate", sec_series),
        ("lagrangian", sec_crit),
        ("critical-values", sec_currents),
        ("bessel", sec_bessel),
        ("amplitude", sec_amplitude),
    ]
    if full:
        secs += [
            ("hessian-jacobian", sec_hessian),
            ("span-fit", sec_span),
            ("recursion-rank", sec_recursion),
            ("cpn", sec_cpn),
            ("frobenius", sec_frobenius),
            ("saddle", sec_saddle),
        ]
    if full or inject == "residue-sign":
        secs.append(("residue-check", sec_residue))
    return secs


def cmd_verify_all(args):
    profile = args.profile or "quick"
    if profile not in ("quick", "full"):
        raise InputError("--profile must be quick or full")
    seed = args.seed
    sections = []
    worst = 0
    for name, fn in _sections(profile, seed, args.inject):
        t0 = time.perf_counter()
        try:
            parts = fn()
            res = max((float(np.abs(p.get("residual", 0) or 0)) for p in parts), default=0.0)
            rep = {"check": name, "status": "pass", "residual": res, "parts": len(parts)}
        except CheckFailure as exc:
            rep = {"check": exc.check, "section": name, "status": "fail", "residual": None, "message": str(exc)}
            worst = max(worst, 2)
        except BudgetExceeded as exc:
            rep = {"check": name, "status": "budget", "residual": None, "message": str(exc)}
            worst = max(worst, 1)
        sections.append(finish(rep, name, seed, t0))
    status = {0: "pass", 1: "budget", 2: "fail"}[worst]
    failed = [s["check"] for s in sections if s["status"] != "pass"]
    return {"check": "verify-all", "profile": profile, "status": status, "residual": None,
            "sections": sections, "failed": failed}


# -- parser --------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=None, help="lattice size (n+1 sites)")
    common.add_argument("--q", default=None, help="comma-separated complex values, e.g. 0.3,0.1-0.2i")
    common.add_argument("--hbar", type=float, default=None)
    common.add_argument("--order", type=int, default=None, help="truncation order in q")
    common.add_argument("--grid", type=int, default=None, help="points per angle")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--config", default=None, help="file with key = value defaults")

    p = argparse.ArgumentParser(prog="flagmirror", description="Quantum Toda / flag manifold mirror checks")
    sub = p.add_subparsers(dest="group", required=True)

    def group(name, help_):
        g = sub.add_parser(name, help=help_)
        return g.add_subparsers(dest="cmd", required=True)

    toda = group("toda", "Toda lattice integrals")
    toda.add_parser("delta", parents=[common]).set_defaults(func=cmd_toda_delta)
    c = toda.add_parser("check", parents=[common])
    c.add_argument("--pairwise", action="store_true", help="also check [D_l, D_m] = 0 for n = 3")
    c.set_defaults(func=cmd_toda_check)

    qh = group("qh", "quantum cohomology of flag manifolds")
    c = qh.add_parser("ring", parents=[common])
    c.add_argument("--classical", action="store_true")
    c.set_defaults(func=cmd_qh_ring)
    c = qh.add_parser("product", parents=[common])
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--classical", action="store_true")
    c.set_defaults(func=cmd_qh_product)
    qh.add_parser("fiber", parents=[common]).set_defaults(func=cmd_qh_fiber)
    c = qh.add_parser("residue-check", parents=[common])
    c.add_argument("--inject-sign-error", action="store_true", help="flip the calibrated sign")
    c.set_defaults(func=cmd_qh_residue)
    qh.add_parser("degree-two", parents=[common]).set_defaults(func=cmd_qh_degree_two)

    mi = group("mirror", "triangular-lattice mirror")
    mi.add_parser("crit", parents=[common]).set_defaults(func=cmd_mirror_crit)
    c = mi.add_parser("check", parents=[common])
    c.add_argument("--all", action="store_true", help="include the Hessian/Jacobian ratio")
    c.set_defaults(func=cmd_mirror_check)
    mi.add_parser("amplitude", parents=[common]).set_defaults(func=cmd_mirror_amplitude)

    se = group("series", "solution series")
    c = se.add_parser("compute", parents=[common])
    c.add_argument("--check", choices=("hamiltonian", "integrals", "recursion-rank"), default=None)
    c.set_defaults(func=cmd_series_compute)
    c = se.add_parser("cpn", parents=[common])
    c.add_argument("--N", type=int, default=None)
    c.set_defaults(func=cmd_series_cpn)

    it = group("integral", "torus integrals")
    c = it.add_parser("torus", parents=[common])
    c.add_argument("--radii", default=None)
    c.set_defaults(func=cmd_integral_torus)
    c = it.add_parser("span-fit", parents=[common])
    c.add_argument("--samples", type=int, default=None)
    c.set_defaults(func=cmd_integral_span)
    it.add_parser("saddle", parents=[common]).set_defaults(func=cmd_integral_saddle)

    c = sub.add_parser("verify-all", parents=[common], help="run every check")
    c.add_argument("--profile", choices=("quick", "full"), default=None)
    c.add_argument("--inject", choices=("residue-sign",), default=None, help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_verify_all)
    return p


def _apply_config(args):
    cfg = read_config(args.config) if args.config else {}
    for key, val in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    if args.seed is None:
        args.seed = 0
    if args.format is None:
        args.format = "json"
    if args.format not in ("json", "csv"):
        raise InputError("--format must be json or csv")


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    check = getattr(args, "cmd", None) or args.group
    try:
        _apply_config(args)
        report = args.func(args)
    except CheckFailure as exc:
        report = {"check": exc.check, "status": "fail", "residual": exc.residual, "message": str(exc)}
        emit(finish(report, check, getattr(args, "seed", 0), t0), args.format or "json", out)
        print(f"error: check {exc.check} failed: {exc}", file=sys.stderr)
        return 1
    except (InputError, DegenerateInput, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"error: budget exhausted: {exc}", file=sys.stderr)
        return 3
    report = finish(report, check, args.seed, t0)
    emit(report, args.format, out)
    if report.get("status") == "fail":
        print(f"error: {', '.join(report.get('failed', [report['check']]))} failed", file=sys.stderr)
        return 1
    if report.get("status") == "budget":
        return 3
    return 0



def main_exit():
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
