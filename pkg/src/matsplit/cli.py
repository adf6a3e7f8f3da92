"""Command-line front end: generate | solve | bench | flowfield | verify."""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, matcore, problems, solver
from .errors import MatsplitError

# Per-family solver defaults mirroring the settings that reproduce the
# reference results; any explicit flag overrides them.
FAMILY_DEFAULTS = {
    "gram": {"beta": 0.2},
    "hadamard": {"beta": 0.2},
    "cyclic": {"beta": 0.2, "T": 1},
    "nmf_designed": {"beta": 0.2, "g": 1.2, "h": 1.2, "T": 10},
    "udisj": {"beta": 0.2, "g": 0.8, "h": 0.8, "T": 10},
    "edm": {"beta": 1.0, "g": 0.5, "h": 0.5, "T": 10, "init": "special"},
    "int2d": {"beta": 0.2, "T": 20},
}

EXIT_ACCEPTED = 0
EXIT_REJECTED = 1
EXIT_BAD_PARAMS = 2
EXIT_MAX_ITER = 3
EXIT_FAILED = 4

_STATUS_CODES = {"solved": EXIT_ACCEPTED, "max_iter": EXIT_MAX_ITER, "failed": EXIT_FAILED}


def _add_solve_flags(p):
    p.add_argument("--method", help="solution method (defaults per family)")
    p.add_argument("--algorithm", choices=("rrr", "admm"), default="rrr")
    p.add_argument("--beta", type=float, help="RRR relaxation parameter (0, 2)")
    p.add_argument("--alpha", type=float, default=1.0, help="ADMM step parameter")
    p.add_argument("--g", type=float, help="left metric parameter")
    p.add_argument("--h", type=float, help="right metric parameter")
    p.add_argument("--T", type=int, help="tangent refinement cycles of the product projection")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=1e-10, help="discrepancy tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-every", type=int, help="trace sampling stride (default: adaptive)")
    p.add_argument("--swap-projections", action="store_true",
                   help="exchange the roles of the two projections")
    p.add_argument("--init", choices=("random", "special"),
                   help="initial point kind (special: rank-excessive SVD-based)")
    p.add_argument("--struct", choices=("nonnegative", "integer"),
                   help="rank-1 structure projection (default integer)")
    p.add_argument("--stall-restart", action="store_true",
                   help="reseed when the discrepancy variance stalls")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="matsplit",
        description="Matrix factorization with structured factors by split projections.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a problem instance",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    g.add_argument("--family", required=True,
                   choices=("gram", "hadamard", "cyclic", "nmf_designed", "udisj",
                            "edm", "int2d", "maxdet15"))
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--f", type=float, help="zero fraction (default k/m)")
    g.add_argument("--d", type=int, help="unique-disjointness recursion depth")
    g.add_argument("--c", type=int, help="int2d product constant")
    g.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="solve an instance",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    _add_solve_flags(s)

    b = sub.add_parser("bench", help="run independent trials and aggregate",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    b.add_argument("--manifest", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--trials", type=int, required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--fit-exponential", action="store_true")
    _add_solve_flags(b)

    f = sub.add_parser("flowfield", help="sample the RRR flow field of the plane toy",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    f.add_argument("--c", type=int, required=True)
    f.add_argument("--xmin", type=float, required=True)
    f.add_argument("--xmax", type=float, required=True)
    f.add_argument("--ymin", type=float, required=True)
    f.add_argument("--ymax", type=float, required=True)
    f.add_argument("--step", type=float, required=True)
    f.add_argument("--T", type=int, default=20)
    f.add_argument("--out", required=True, help="CSV output path")

    v = sub.add_parser("verify", help="verify candidate solution files",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    v.add_argument("--manifest", required=True)
    v.add_argument("--candidate", required=True, help="directory holding solution files")
    v.add_argument("--tol", type=float, default=1e-6)
    return ap


def _generate_instance(args):
    fam = args.family
    if fam == "maxdet15":
        return problems.maxdet_candidate_15()
    if fam == "gram":
        m = args.m or 15
        return problems.gen_gram(m, args.k or m, args.seed)
    if fam == "hadamard":
        return problems.gen_hadamard(args.m or 12)
    if fam == "cyclic":
        if args.m is None:
            return problems.c23_instance()
        return problems.gen_cyclic(args.m, args.seed)
    if fam == "nmf_designed":
        m = args.m or 50
        n = args.n or m
        k = args.k or m // 2
        return problems.gen_nmf_designed(m, n, k, args.f, args.seed)
    if fam == "udisj":
        return problems.udisj(args.d or 3)
    if fam == "edm":
        return problems.edm(args.m or 6, args.k)
    if fam == "int2d":
        return problems.int2d_instance(args.c or 15)
    raise MatsplitError(f"unknown family {fam!r}")


def cmd_generate(args):
    try:
        inst = _generate_instance(args)
    except MatsplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_PARAMS
    path = problems.write_instance(inst, args.out)
    rank = matcore.numerical_rank(inst.C)
    print(f"family={inst.family} params={inst.params} shape={inst.C.shape} "
          f"rank={rank} manifest={path}")
    return EXIT_ACCEPTED


def _resolve_config(args, family):
    defaults = FAMILY_DEFAULTS.get(family, {})
    beta = args.beta if args.beta is not None else defaults.get("beta", 0.2)
    gg = args.g if args.g is not None else defaults.get("g", 1.0)
    hh = args.h if args.h is not None else defaults.get("h", 1.0)
    t = args.T if args.T is not None else defaults.get("T", 10)
    init_kind = args.init if args.init is not None else defaults.get("init", "random")
    cfg = solver.SolveConfig(
        algorithm=args.algorithm, beta=beta, alpha=args.alpha, T=t, g=gg, h=hh,
        max_iter=args.max_iter, delta_tol=args.tol, seed=args.seed,
        swap_projections=args.swap_projections, trace_every=args.trace_every,
        stall_restart=args.stall_restart)
    return cfg, init_kind


def _result_payload(inst, method, cfg, out, init_kind, struct):
    payload = {
        "status": out.status,
        "iterations": out.iterations,
        "final_delta": out.final_delta,
        "seed": cfg.seed,
        "prng_id": out.prng_id,
        "restarts": out.restarts,
        "config": {**asdict(cfg), "method": method, "family": inst.family,
                   "init": init_kind, "struct": struct},
    }
    if out.message:
        payload["message"] = out.message
    return payload


def cmd_solve(args):
    inst = problems.read_instance(args.manifest)
    method = args.method or problems.DEFAULT_METHOD[inst.family]
    try:
        cfg, init_kind = _resolve_config(args, inst.family)
        prob = problems.build_problem(inst, method, cfg, struct=args.struct,
                                      init_kind=init_kind)
    except MatsplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_PARAMS
    out = solver.solve(prob.pair, prob.init(cfg.seed), cfg, verifier=prob.verifier,
                       reinit=prob.init if cfg.stall_restart else None)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = _result_payload(inst, method, cfg, out, init_kind, args.struct)
    (outdir / "result.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    with open(outdir / "trace.csv", "w") as fh:
        fh.write("iter,delta\n")
        for rec in out.trace:
            fh.write(f"{rec.iter},{rec.delta!r}\n")
    if out.solution is not None:
        for name, arr in prob.extract(out.solution).items():
            matcore.write_matrix(outdir / f"{name}.txt", arr)
    print(f"status={out.status} iterations={out.iterations} final_delta={out.final_delta:.3e}")
    return _STATUS_CODES[out.status]


def cmd_bench(args):
    inst = problems.read_instance(args.manifest)
    method = args.method or problems.DEFAULT_METHOD[inst.family]
    try:
        cfg, init_kind = _resolve_config(args, inst.family)
        if args.trials < 1:
            raise MatsplitError("--trials must be >= 1")
    except MatsplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_PARAMS
    results = bench.run_trials(inst, method, cfg, args.trials, jobs=args.jobs,
                               struct=args.struct, init_kind=init_kind)
    agg = bench.aggregate(results, fit_exponential=args.fit_exponential)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "trials.csv", "w") as fh:
        fh.write("trial,seed,status,iterations,final_delta\n")
        for t, r in enumerate(results):
            fh.write(f"{t},{r['seed']},{r['status']},{r['iterations']},{r['final_delta']!r}\n")
    payload = {"aggregate": agg,
               "config": {**asdict(cfg), "method": method, "family": inst.family,
                          "init": init_kind, "struct": args.struct, "trials": args.trials}}
    (outdir / "stats.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(json.dumps(agg, sort_keys=True))
    return EXIT_ACCEPTED


def cmd_flowfield(args):
    if args.step <= 0:
        print("error: --step must be positive", file=sys.stderr)
        return EXIT_BAD_PARAMS
    hyperbola, rounding = problems.int2d_point_projections(args.c, args.T)
    field = solver.flow_field(hyperbola, rounding, args.xmin, args.xmax,
                              args.ymin, args.ymax, args.step)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("x,y,vx,vy\n")
        for x, y, vx, vy in field:
            fh.write(f"{float(x)!r},{float(y)!r},{float(vx)!r},{float(vy)!r}\n")
    nan_nodes = int(np.sum(~np.isfinite(field[:, 2:]).all(axis=1)))
    out.with_suffix(out.suffix + ".nan_count.json").write_text(
        json.dumps({"nan_nodes": nan_nodes}) + "\n")
    print(f"nodes={field.shape[0]} nan_nodes={nan_nodes} out={out}")
    return EXIT_ACCEPTED


_CANDIDATE_FILES = {
    "gram": ("X",),
    "hadamard": ("X",),
    "cyclic": ("x", "y"),
    "nmf_designed": ("X", "Y"),
    "udisj": ("X", "Y"),
    "edm": ("X", "Y"),
    "int2d": ("x", "y"),
}


def cmd_verify(args):
    inst = problems.read_instance(args.manifest)
    cand_dir = Path(args.candidate)
    candidate = {}
    for name in _CANDIDATE_FILES[inst.family]:
        path = cand_dir / f"{name}.txt"
        if not path.exists():
            print(f"rejected: missing candidate file {path}", file=sys.stderr)
            return EXIT_REJECTED
        try:
            candidate[name] = matcore.read_matrix(path)
        except MatsplitError as exc:
            print(f"rejected: {exc}", file=sys.stderr)
            return EXIT_REJECTED
    accepted, reason = problems.verify(inst, candidate, tol=args.tol)
    if accepted:
        print("accepted")
        return EXIT_ACCEPTED
    print(f"rejected: {reason}", file=sys.stderr)
    return EXIT_REJECTED


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"generate": cmd_generate, "solve": cmd_solve, "bench": cmd_bench,
               "flowfield": cmd_flowfield, "verify": cmd_verify}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
