"""Command line entry point: ``diagest <subcommand> ...``.

Row and element indices on the command line are 1-based, matching Matrix
Market files; the Python API is 0-based.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from diagest import bounds
from diagest.diagpp import DiagppConfig, diagpp
from diagest.estimators import estimate_diagonal, hutchinson_trace_from_estimate, relative_error
from diagest.exceptions import DiagestError
from diagest.harness import (
    DEFAULT_PERCENTILES,
    DEFAULT_S_GRID,
    ESTIMATORS,
    ExperimentSpec,
    emit_csv,
    load_matrix,
    reference_quantities,
    run_experiment,
)
from diagest.oracle import (
    MAX_DENSE_N,
    PowerLawSpectrumSpec,
    eigen_factorize,
    generate_power_law_psd,
    write_matrix_market,
)
from diagest.probes import DEFAULT_SEED, ProbeStream

BOUND_KINDS = [k.value for k in bounds.BoundKind]
# extra flags each bound kind accepts beyond --eps/--delta
BOUND_FLAGS = {
    "row-dependent": {"dist"},
    "relative-element": {"dist", "ratio"},
    "full": {"dist", "n"},
    "relative-full": {"dist", "n", "ratio"},
    "kappa2": {"n", "kappa"},
    "kappa-d": {"n", "kappa"},
    "eigenvector": {"n", "sigma_min", "lambda_ratio"},
    "diagpp": {"n", "ratio"},
}
REQUIRED_FLAGS = {
    "relative-element": {"ratio"},
    "full": {"n"},
    "relative-full": {"n", "ratio"},
    "kappa2": {"n", "kappa"},
    "kappa-d": {"n", "kappa"},
    "eigenvector": {"n", "sigma_min", "lambda_ratio"},
    "diagpp": {"n", "ratio"},
}
OPTIONAL_BOUND_ARGS = ("dist", "n", "ratio", "kappa", "sigma_min", "lambda_ratio")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _write_vector(path: str, values: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("i,estimate\n")
        for i, v in enumerate(values, start=1):
            fh.write(f"{i},{float(v)!r}\n")


def _report_estimate(values: np.ndarray, loaded, out) -> None:
    ref = reference_quantities(loaded.op)
    print(f"relative_error = {relative_error(values, ref.diag):.6e}")
    if out:
        _write_vector(out, values)
        print(f"wrote {out}")


def cmd_estimate(args) -> int:
    loaded = load_matrix(args.matrix)
    op = loaded.op
    est = estimate_diagonal(op, args.s, ProbeStream(op.n, args.dist, args.seed))
    print(f"n = {op.n}")
    print(f"s = {est.s} ({est.dist.value})")
    print(f"matvecs = {op.matvec_count}")
    if est.dist.value == "rademacher":
        print(f"hutchinson_trace = {hutchinson_trace_from_estimate(est)!r}")
    _report_estimate(est.values, loaded, args.out)
    return 0


def cmd_diagpp(args) -> int:
    loaded = load_matrix(args.matrix)
    op = loaded.op
    split = tuple(args.split) if args.split else None
    res = diagpp(op, DiagppConfig(args.s, split=split, dist=args.dist), ProbeStream(op.n, "rademacher", args.seed))
    print(f"n = {op.n}")
    print(f"rank = {res.rank}")
    print(f"split (sketch, projected, residual) = {res.split_used}")
    print(f"matvecs = {res.matvecs_used}")
    _report_estimate(res.diagonal, loaded, args.out)
    return 0


def cmd_bound(args, parser) -> int:
    kind = args.kind
    given = {name for name in OPTIONAL_BOUND_ARGS if getattr(args, name) is not None}
    extra = given - BOUND_FLAGS[kind]
    if extra:
        parser.error(f"--kind {kind} does not take {', '.join('--' + e.replace('_', '-') for e in sorted(extra))}")
    missing = REQUIRED_FLAGS.get(kind, set()) - given
    if missing:
        parser.error(f"--kind {kind} requires {', '.join('--' + m.replace('_', '-') for m in sorted(missing))}")
    if args.eps <= 0:
        parser.error("--eps must be positive")
    if not 0 < args.delta < 1:
        parser.error("--delta must lie in (0, 1)")
    ed = bounds.EpsDelta(args.eps, args.delta)
    dist = args.dist or "rademacher"

    if kind == "row-dependent":
        result = bounds.bound_row_dependent(dist, ed)
    elif kind == "relative-element":
        result = bounds.bound_relative_element(dist, ed, args.ratio)
    elif kind == "full":
        result = bounds.bound_full_diagonal(dist, ed, args.n)
    elif kind == "relative-full":
        result = bounds.bound_full_diagonal(dist, ed, args.n, relative=True, full_ratio=args.ratio)
    elif kind in ("kappa2", "kappa-d"):
        result = bounds.bound_kappa(ed, args.n, args.kappa, kind)
    elif kind == "eigenvector":
        result = bounds.bound_eigenvector(ed, args.n, args.sigma_min, args.lambda_ratio, 1.0)
    else:
        result = bounds.diagpp_query_bound(ed, args.n, args.ratio)
    print(f"kind = {kind}")
    print(result)
    return 0


def cmd_diagnose(args) -> int:
    loaded = load_matrix(args.matrix)
    op = loaded.op
    M = loaded.dense
    if M is None:
        # sparse files keep their CSR matrix; identity sources are diagonal
        M = getattr(op, "matrix", None)
        if M is None:
            M = np.diag(reference_quantities(op).diag)

    eig = loaded.eig
    if eig is None and op.n <= MAX_DENSE_N:
        try:
            eig = eigen_factorize(M.toarray() if hasattr(M, "toarray") else M)
        except np.linalg.LinAlgError as exc:
            print(f"warning: eigensolver failed ({exc}); eigen constants absent", file=sys.stderr)
    consts = bounds.matrix_constants(M, eig)
    bad = [r for r in (args.rows or []) if not 1 <= r <= op.n]
    if bad:
        raise ValueError(f"rows {bad} outside 1..{op.n}")
    rows = [r - 1 for r in (args.rows or [])]
    print(consts.summary(rows=rows))
    return 0


def cmd_experiment(args) -> int:
    spec = ExperimentSpec(
        matrix_source=args.matrix,
        estimator=args.estimator,
        s_grid=args.s_grid,
        trials=args.trials,
        percentiles=args.percentiles,
        element=None if args.element is None else args.element - 1,
        master_seed=args.seed,
        workers=args.workers,
    )
    records = run_experiment(spec)
    if args.out:
        emit_csv(records, args.out)
        print(f"wrote {len(records)} records to {args.out}")
    else:
        print("s,percentile,relative_error,bound_value,bound_valid")
        for r in records:
            bound = "" if r.bound_value is None else f"{r.bound_value:.6g}"
            print(f"{r.s},{r.percentile:g},{r.relative_error:.6g},{bound},{str(r.bound_valid).lower()}")
    return 0


def cmd_gen_matrix(args) -> int:
    A, eig = generate_power_law_psd(PowerLawSpectrumSpec(args.n, args.c, args.seed))
    write_matrix_market(args.out, A, comment=f"power-law spectrum i^-{args.c:g}, n={args.n}, seed={args.seed}")
    print(f"wrote {args.out} (n={args.n}, c={args.c:g}, trace={float(np.sum(eig.lam))!r})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diagest", description="Stochastic diagonal estimation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def matrix_arg(p):
        p.add_argument("--matrix", required=True,
                       help="powerlaw:n,c[,seed] | identity:n | path (.mtx, .npy or dense text)")

    def seed_arg(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")

    p = sub.add_parser("estimate", help="estimate a diagonal with Rademacher or Gaussian probes")
    matrix_arg(p)
    p.add_argument("--dist", choices=["rademacher", "gaussian"], default="rademacher")
    p.add_argument("--s", type=_positive_int, required=True)
    seed_arg(p)
    p.add_argument("--out", help="write the estimate as CSV")

    p = sub.add_parser("diagpp", help="run Diag++")
    matrix_arg(p)
    p.add_argument("--s", type=_positive_int, required=True)
    p.add_argument("--split", type=_int_list, help="sketch,projected,residual budgets")
    p.add_argument("--dist", choices=["rademacher", "gaussian"], default="rademacher",
                   help="residual probe distribution")
    seed_arg(p)
    p.add_argument("--out")

    p = sub.add_parser("bound", help="sufficient query counts")
    p.add_argument("--kind", choices=BOUND_KINDS, default="row-dependent")
    p.add_argument("--dist", choices=["rademacher", "gaussian"])
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--ratio", type=float,
                   help="row ratio, full ratio, or tr(A)/||A_d|| depending on --kind")
    p.add_argument("--kappa", type=float)
    p.add_argument("--sigma-min", dest="sigma_min", type=float)
    p.add_argument("--lambda-ratio", dest="lambda_ratio", type=float, help="||lambda||^2 / ||A_d||^2")

    p = sub.add_parser("diagnose", help="print matrix constants")
    matrix_arg(p)
    p.add_argument("--rows", type=_int_list, help="1-based rows whose ratios to print")

    p = sub.add_parser("experiment", help="multi-trial convergence study, CSV output")
    matrix_arg(p)
    p.add_argument("--estimator", choices=ESTIMATORS, help="default rademacher")
    p.add_argument("--dist", choices=["rademacher", "gaussian"],
                   help="shorthand for --estimator rademacher|gaussian")
    p.add_argument("--s-grid", type=_int_list, default=list(DEFAULT_S_GRID))
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--percentiles", type=_float_list, default=list(DEFAULT_PERCENTILES))
    p.add_argument("--element", type=_positive_int, help="1-based element index; default full diagonal")
    p.add_argument("--workers", type=_positive_int, default=1)
    seed_arg(p)
    p.add_argument("--out")

    p = sub.add_parser("gen-matrix", help="write a power-law PSD matrix in Matrix Market format")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--c", type=float, default=1.0)
    seed_arg(p)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment":
        if args.dist and args.estimator not in (None, args.dist):
            parser.error("--dist conflicts with --estimator")
        args.estimator = args.estimator or args.dist or "rademacher"
    handlers = {
        "estimate": cmd_estimate,
        "diagpp": cmd_diagpp,
        "diagnose": cmd_diagnose,
        "experiment": cmd_experiment,
        "gen-matrix": cmd_gen_matrix,
    }
    try:
        if args.command == "bound":
            return cmd_bound(args, parser)
        return handlers[args.command](args)
    except (DiagestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
