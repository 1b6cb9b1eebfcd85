"""Command line front end: ``canodual solve|scan|verify|oracle <problem.json>``.

Exit codes: 0 success, 1 bad input, 2 no fixed point accepted (solve),
3 oracle disagreement (verify).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import __version__
from .dual import default_grid, write_scan_csv
from .exceptions import ProblemFileError
from .io import format_table, load_problem, problem_to_dict
from .oracle import cross_validate, multistart_stationary_search
from .recovery import SolveOptions, solve

EXIT_OK, EXIT_INPUT, EXIT_NONE, EXIT_MISMATCH = 0, 1, 2, 3
DEFAULT_ORACLE_BOX = (-10.0, 10.0)


def _parse_box(text):
    try:
        pairs = []
        for part in text.split(","):
            lo, hi = part.split(":")
            pairs.append([float(lo), float(hi)])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi[,lo:hi], got {text!r}") from None
    if any(lo >= hi for lo, hi in pairs):
        raise argparse.ArgumentTypeError("every interval needs lo < hi")
    return pairs


def build_parser():
    parser = argparse.ArgumentParser(
        prog="canodual",
        description="Find all fixed points of potential operators through the canonical dual problem.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file", help="problem JSON file, or a bundled name: example1, example2, example3")
        p.add_argument("--box", type=_parse_box, help="dual search box lo:hi[,lo:hi]; write --box=-10:10 for negative bounds")
        p.add_argument("--grid", type=int, metavar="N", help="grid nodes per dual axis")
        p.add_argument("--json", metavar="OUT", help="write a machine-readable report")

    p_solve = sub.add_parser("solve", help="solve the dual problem and report every fixed point")
    common(p_solve)
    p_scan = sub.add_parser("scan", help="export the dual landscape as CSV (m <= 2)")
    common(p_scan)
    p_scan.add_argument("--out", metavar="CSV", help="output file (default: stdout)")
    p_verify = sub.add_parser("verify", help="cross-check the dual pipeline against the primal oracle")
    common(p_verify)
    p_verify.add_argument("--seed", type=int, help="oracle start-sequence seed")
    p_oracle = sub.add_parser("oracle", help="run only the primal multistart oracle")
    common(p_oracle)
    p_oracle.add_argument("--seed", type=int, help="oracle start-sequence seed")
    return parser


def _options(pf, args):
    box = args.box if args.box is not None else pf.solver.box
    if box is not None and len(box) == 1:
        box = box[0]
    steps = args.grid if args.grid is not None else pf.solver.grid_steps
    return SolveOptions(box=box, grid_steps=steps, tol=pf.solver.tolerances)


def _oracle(pf, args):
    box = pf.solver.oracle_box or [list(DEFAULT_ORACLE_BOX)]
    if len(box) == 1:
        box = box[0]
    seed = args.seed if getattr(args, "seed", None) is not None else pf.solver.seed
    return multistart_stationary_search(pf.problem, box, pf.solver.oracle_starts, seed=seed)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def cmd_solve(pf, args, out=None):
    out = out or sys.stdout
    diagnostics = {}
    t0 = time.perf_counter()
    records = solve(pf.problem, _options(pf, args), diagnostics)
    elapsed = time.perf_counter() - t0
    rows = [r.to_dict() for r in records]
    if rows:
        print(format_table(rows), file=out)
    else:
        print("no stationary point in box", file=out)
    for fail in diagnostics["failures"]:
        print(f"rejected sigma={fail['sigma']}: {fail['reason']}", file=sys.stderr)
    if args.json:
        _write_json(args.json, {
            "problem": problem_to_dict(pf.problem),
            "records": rows,
            "diagnostics": diagnostics,
            "elapsed_s": elapsed,
        })
    return EXIT_OK if records else EXIT_NONE


def cmd_scan(pf, args, out=None):
    out = out or sys.stdout
    p = pf.problem
    if p.m > 2:
        print("scan supports m <= 2", file=sys.stderr)
        return EXIT_INPUT
    opts = _options(pf, args)
    grid = default_grid(p, opts.box, opts.grid_steps)
    if args.out:
        with open(args.out, "w") as fh:
            write_scan_csv(fh, p, grid)
    else:
        write_scan_csv(out, p, grid)
    return EXIT_OK


def cmd_verify(pf, args, out=None):
    out = out or sys.stdout
    records = solve(pf.problem, _options(pf, args))
    points = _oracle(pf, args)
    report = cross_validate(records, points)
    print(f"dual records: {len(records)}  oracle points: {len(points)}  matched: {len(report.matched)}", file=out)
    for m in report.matched:
        print(f"  record {m['record'] + 1} <-> oracle {m['oracle'] + 1}: distance {m['distance']:.3g}, "
              f"value diff {m['value_diff']:.3g}", file=sys.stderr)
    for i in report.unmatched_dual:
        print(f"  unmatched dual record x={records[i].x.tolist()}", file=sys.stderr)
    for j in report.unmatched_oracle:
        print(f"  unmatched oracle point x={points[j].x.tolist()}", file=sys.stderr)
    for m in report.value_mismatches:
        print(f"  value mismatch record {m['record'] + 1}: {m['value_diff']:.3g}", file=sys.stderr)
    print("verify: OK" if report.ok else "verify: MISMATCH", file=out)
    if args.json:
        _write_json(args.json, {"records": [r.to_dict() for r in records], "oracle": report.to_dict()})
    return EXIT_OK if report.ok else EXIT_MISMATCH


def cmd_oracle(pf, args, out=None):
    out = out or sys.stdout
    points = _oracle(pf, args)
    for i, q in enumerate(points, 1):
        xs = ", ".join(f"{v:.6g}" for v in q.x)
        print(f"{i}  x=({xs})  Pi={q.pi_value:.6g}  |grad|={q.grad_norm:.3g}  hessian(+,-,0)={q.hess_signature}", file=out)
    if args.json:
        _write_json(args.json, {"points": [q.to_dict() for q in points]})
    return EXIT_OK if points else EXIT_NONE


COMMANDS = {"solve": cmd_solve, "scan": cmd_scan, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        pf = load_problem(args.file)
    except ProblemFileError as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](pf, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
