"""Command-line driver: check, smooth, converge, generate.

Exit codes: 0 success, 1 validation failure, 2 pipeline failure, 3 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .compat import CompatibilityError, PiecewiseQuadMap, local_singular_floor, validate_pieces
from .cutoff import PROFILE_KINDS
from .errors import InstanceFormatError, PQSmoothError
from .instances import (make_four_quadrant_model, make_two_cell_model, random_instance_spec,
                        unit_grid)
from .io import (csv_text, dumps, instance_document, key_values, load_instance, report_document,
                 table, write_text, LAMBDA_RTOL)
from .partition import plan_neighborhoods
from .pipeline import MAX_GLOBAL_HALVINGS, MAX_REFINE, global_smooth
from .quadmap import QuadraticMap2
from . import verify

EXIT_OK, EXIT_VALIDATION, EXIT_PIPELINE, EXIT_IO = 0, 1, 2, 3


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(text: str, out: Optional[str], doc: Optional[dict]) -> None:
    sys.stdout.write(text)
    if out:
        write_text(out, dumps(doc))
        write_text(str(Path(out).with_suffix(".txt")), text)


def _vector(text: str) -> np.ndarray:
    try:
        v = [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from None
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return np.array(v)


def _grid(text: str):
    try:
        n, m = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 3x3, got {text!r}") from None
    if n < 1 or m < 1:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return n, m


def _feature(text: str):
    kind, _, fid = text.partition(":")
    if kind not in ("edge", "vertex") or not fid.isdigit():
        raise argparse.ArgumentTypeError(f"feature must look like edge:3 or vertex:0, got {text!r}")
    return kind, int(fid)


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _build_map(data) -> PiecewiseQuadMap:
    try:
        return PiecewiseQuadMap.build(data.partition, data.pieces, data.m, data.m_provenance)
    except PQSmoothError as exc:
        raise _Fail(EXIT_VALIDATION, f"validation failed: {exc}") from exc


# -- check -------------------------------------------------------------------------------


def cmd_check(args) -> int:
    data = load_instance(args.instance)
    res = validate_pieces(data.partition, data.pieces)
    issues = list(res.issues)
    edges = []
    for e in data.partition.edges:
        r = res.edges[e.id]
        if isinstance(r, CompatibilityError):
            edges.append({"id": e.id, "status": r.kind, "coefficients": r.coefficients, "message": str(r)})
        else:
            edges.append({"id": e.id, "status": "ok", "a": r.a.tolist(), "residual": r.residual})
    vertices = []
    for v in data.partition.vertices:
        r = res.vertices[v.id]
        if isinstance(r, CompatibilityError):
            vertices.append({"id": v.id, "status": r.kind, "message": str(r)})
        else:
            vertices.append({"id": v.id, "status": "ok", "C": r.C, "a2": r.a2.tolist(), "a4": r.a4.tolist()})
    lam = res.lam
    if data.lam is not None and abs(lam - data.lam) > LAMBDA_RTOL * max(1.0, abs(lam)):
        issues.append(f"stored lambda {data.lam!r} disagrees with recomputed {lam!r}")
    m_est = 0.5 * local_singular_floor(data.partition, data.pieces)
    ok = not issues
    body = {"ok": ok, "issues": issues, "edges": edges, "vertices": vertices, "lambda": lam,
            "lambda_file": data.lam, "m": data.m, "m_provenance": data.m_provenance,
            "m_estimate": m_est, "m_estimate_label": "non-certified",
            "cell_floors": [{"cell": f.cell, "value": f.value, "point": list(f.point)} for f in res.floors]}
    doc = report_document("check", {"instance": str(args.instance)}, body, __version__)
    text = key_values([("status", "PASS" if ok else "FAIL"), ("lambda", lam),
                       ("m (asserted)", data.m), ("m estimate (non-certified)", m_est)])
    text += table(["feature", "status", "detail"],
                  [[f"edge:{e['id']}", e["status"], e.get("a", e.get("coefficients"))] for e in edges]
                  + [[f"vertex:{v['id']}", v["status"], v.get("C", "")] for v in vertices])
    text += "".join(f"issue: {i}\n" for i in issues)
    _emit(text, args.out, doc)
    return EXIT_OK if ok else EXIT_VALIDATION


# -- smooth ------------------------------------------------------------------------------


def smooth_parameters(args) -> dict:
    return {"instance": str(args.instance), "delta": args.delta, "profile": args.profile,
            "shrink": args.shrink, "seed": args.seed, "plan_recipe": "shrink-quarter-edge",
            "max_refine": MAX_REFINE, "max_global_halvings": MAX_GLOBAL_HALVINGS,
            "quad_rtol": verify.QUAD_RTOL, "quad_max_level": verify.QUAD_MAX_LEVEL, "quad_order": 8,
            "sup_samples_per_feature": verify.SUP_GRID**2, "separation_pairs": args.pairs,
            "separation_slack": verify.SEPARATION_SLACK, "collision_spacing": "radius/4",
            "collision_grid_cap": verify.COLLISION_GRID_CAP, "collision_starts": verify.COLLISION_STARTS,
            "min_pair_distance": verify.MIN_PAIR_DISTANCE}


def cmd_smooth(args) -> int:
    data = load_instance(args.instance)
    g = _build_map(data)
    try:
        S, budget, report = global_smooth(g, args.delta, args.profile, args.shrink, seed=args.seed,
                                          n_pairs=args.pairs)
    except PQSmoothError as exc:
        diag = getattr(exc, "diagnostics", None)
        doc = report_document("smooth", smooth_parameters(args),
                              {"ok": False, "error": type(exc).__name__, "message": str(exc),
                               "diagnostics": diag}, __version__)
        _emit(f"FAIL ({type(exc).__name__}): {exc}\n", args.out, doc)
        return EXIT_PIPELINE
    ok = budget.met and report.jacobian_ok and report.injective_ok
    eps = {"vertex": S.eps_vertex.tolist(), "edge": S.eps_edge.tolist()}
    doc = report_document("smooth", smooth_parameters(args),
                          {"ok": ok, "eps": eps, "budget": budget.to_dict(), "report": report.to_dict(),
                           "lambda": g.lam, "m": g.m, "m_provenance": g.m_provenance}, __version__)
    rows = [[f.label, f.eps, f.w21, f.sup_grad_sampled, f.sup_value_bound] for f in report.features]
    text = key_values([
        ("status", "PASS" if ok else "FAIL"), ("delta", args.delta), ("profile", args.profile),
        ("w21 error", report.w21_error), ("  value/jac/hess", " ".join(f"{p:.6g}" for p in report.w21_parts)),
        ("sup grad error (sum)", budget.total_sup_grad), ("eps_hat (certified)", report.sup_value_error),
        ("jacobian floor", report.jacobian_floor), ("lambda/2", 0.5 * report.lam), ("m", report.m),
        ("collision radius", report.collision_radius),
        ("collision search", "pass" if report.injective_ok else f"witness {report.collision_search.witness}"),
        ("global halvings", budget.global_halvings)])
    text += table(["feature", "eps", "w21", "sup grad", "eps_hat"], rows)
    _emit(text, args.out, doc)
    return EXIT_OK if ok else EXIT_PIPELINE


# -- converge ----------------------------------------------------------------------------


def cmd_converge(args) -> int:
    data = load_instance(args.instance)
    g = _build_map(data)
    kind, fid = args.feature
    P = g.partition
    n_feat = len(P.edges) if kind == "edge" else len(P.vertices)
    if fid >= n_feat:
        raise _Fail(EXIT_VALIDATION, f"{kind}:{fid} does not exist ({n_feat} interior {kind}s)")
    plan = plan_neighborhoods(P, args.shrink)
    width = plan.edge_halfwidth[fid] if kind == "edge" else plan.vertex_radius[fid]
    top = args.eps_max if args.eps_max is not None else 0.5 * width
    eps = [top * 2.0**-k for k in range(args.eps_levels)]
    try:
        study = verify.convergence_study(g, (kind, fid), eps, args.profile, args.shrink)
    except ValueError as exc:
        raise _Fail(EXIT_VALIDATION, str(exc)) from exc
    cols = ["eps"] + list(verify.CONVERGENCE_METRICS)
    rows = [[r[c] for c in cols] for r in study.rows]
    fits = {k: (None if f is None else {"slope": f.slope, "intercept": f.intercept, "residual": f.residual})
            for k, f in study.fits.items()}
    params = {"instance": str(args.instance), "feature": f"{kind}:{fid}", "eps": eps,
              "profile": args.profile, "shrink": args.shrink}
    doc = report_document("converge", params, {"rows": study.rows, "fits": fits,
                                               "identically_zero": study.identically_zero}, __version__)
    slope_rows = [[k, "N/A" if f is None else f["slope"]] for k, f in fits.items()]
    text = table(cols, rows) + table(["metric", "slope"], slope_rows)
    sys.stdout.write(text)
    if args.out:
        write_text(args.out, csv_text(cols, rows))
        fit_rows = [[k, "N/A", "N/A", "N/A"] if f is None else [k, f["slope"], f["intercept"], f["residual"]]
                    for k, f in fits.items()]
        out = Path(args.out)
        write_text(str(out.with_name(out.stem + ".fit.csv")),
                   csv_text(["metric", "slope", "intercept", "residual"], fit_rows))
        write_text(str(out.with_suffix(".json")), dumps(doc))
    return EXIT_OK


# -- generate ----------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.preset == "two-cell":
        g = make_two_cell_model(QuadraticMap2.identity(), args.a, args.m)
        gen = {"preset": "two-cell", "a": args.a.tolist()}
        doc = instance_document(g.partition, g.pieces, g.m, g.m_provenance, g.lam, gen)
    elif args.preset == "four-quadrant":
        g = make_four_quadrant_model(QuadraticMap2.identity(), args.a2, args.a4, args.m)
        gen = {"preset": "four-quadrant", "a2": args.a2.tolist(), "a4": args.a4.tolist()}
        doc = instance_document(g.partition, g.pieces, g.m, g.m_provenance, g.lam, gen)
    else:
        n, m = args.grid
        spec = random_instance_spec(*unit_grid(n, m), args.amplitude, args.seed)
        g = spec.build()
        gen = {"preset": "random", "grid": [n, m], "seed": args.seed, "prng": "splitmix64",
               "requested_amplitude": spec.requested_amplitude, "amplitude": spec.amplitude,
               "halvings": spec.halvings, "notes": spec.notes}
        mval, prov = (args.m, "user-asserted") if args.m is not None else (g.m, g.m_provenance)
        doc = instance_document(g.partition, g.pieces, mval, prov, g.lam, gen)
    write_text(args.out, dumps(doc))
    sys.stdout.write(key_values([("wrote", args.out), ("lambda", g.lam), ("m", doc["m"]),
                                 ("m provenance", doc["m_provenance"])]))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pqsmooth", description="Smoothing of C^1 piecewise quadratic plane maps.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate an instance file")
    p.add_argument("instance")
    p.add_argument("--out", help="report path (JSON; a .txt table is written alongside)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("smooth", help="smooth an instance within a W^{2,1} budget")
    p.add_argument("instance")
    p.add_argument("--delta", type=_positive, required=True)
    p.add_argument("--profile", choices=PROFILE_KINDS, default="flat-exponential")
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0, help="seed of the verification sampling")
    p.add_argument("--pairs", type=int, default=100_000, help="sampled pairs for the separation check")
    p.add_argument("--out")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("converge", help="error rates of one feature over dyadic eps levels")
    p.add_argument("instance")
    p.add_argument("--feature", type=_feature, required=True, help="edge:N or vertex:N")
    p.add_argument("--eps-levels", type=int, default=5)
    p.add_argument("--eps-max", type=_positive, default=None, help="largest eps (default: half the planned width)")
    p.add_argument("--profile", choices=PROFILE_KINDS, default="flat-exponential")
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--out", help="CSV path; slopes go to <stem>.fit.csv and a JSON report to <stem>.json")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("generate", help="write a valid instance file")
    p.add_argument("--grid", type=_grid, default=(3, 3), help="cells per axis, e.g. 3x3 (unit cells)")
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("random", "two-cell", "four-quadrant"), default="random")
    p.add_argument("--a", type=_vector, default=np.array([0.1, 0.0]), help="two-cell mismatch, e.g. 0.1,0")
    p.add_argument("--a2", type=_vector, default=np.array([0.1, 0.0]))
    p.add_argument("--a4", type=_vector, default=np.array([0.0, 0.1]))
    p.add_argument("--m", type=_positive, default=None, help="asserted bi-Lipschitz constant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InstanceFormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except _Fail as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except PQSmoothError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PIPELINE if not isinstance(exc, ValueError) else EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
