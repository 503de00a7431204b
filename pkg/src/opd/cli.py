"""Command-line interface.

Subcommands:
  gen     write a generated instance file
  run     execute an instance, check invariants, write report/CSV
  oracle  compute the offline optimum only
  check   re-validate a stored report against its instance

Exit codes: 0 ok, 2 invariant failure, 3 unbounded instance,
4 oracle disagreement.  Set OPD_LOG=debug for verbose logging and
OPD_NO_NUMBA=1 to force the pure-numpy kernel path.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import logging
import os
import sys

from . import harness
from .errors import OpdError, Unbounded
from .reporting import RunReport, dumps_canonical

log = logging.getLogger("opd")

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_UNBOUNDED = 3
EXIT_DISAGREEMENT = 4


def _parse_params(pairs):
    out = {}
    for pair in pairs or []:
        key, _, value = pair.partition("=")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def cmd_gen(args) -> int:
    instance = harness.generate(args.family, _parse_params(args.param), args.seed)
    text = dumps_canonical(harness.instance_to_dict(instance))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _run_one(path, args) -> int:
    instance = harness.load_instance(path)
    try:
        report = harness.run(
            instance,
            mode=args.mode,
            rho=args.rho,
            eta_multiplier=args.eta_multiplier,
            keep_trace=args.trace,
        )
    except Unbounded as exc:
        print(f"unbounded: {exc}", file=sys.stderr)
        return EXIT_UNBOUNDED
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
    sys.stdout.write(report.summary_block())
    if report.summary.get("oracle_status") == "failed":
        return EXIT_DISAGREEMENT
    if not report.all_passed:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_run(args) -> int:
    if args.glob:
        paths = sorted(globmod.glob(args.glob))
        if not paths:
            print(f"no instances match {args.glob!r}", file=sys.stderr)
            return 1
        worst = EXIT_OK
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                codes = list(pool.map(_run_glob_entry, [(p, args.mode) for p in paths]))
            for path, code in zip(paths, codes):
                print(f"{path}: exit {code}")
                worst = max(worst, code)
        else:
            for path in paths:
                print(f"== {path}")
                code = _run_one(path, args)
                worst = max(worst, code)
        return worst
    if not args.instance:
        print("run needs --instance or --glob", file=sys.stderr)
        return 1
    return _run_one(args.instance, args)


def _run_glob_entry(entry) -> int:
    path, mode = entry
    ns = argparse.Namespace(
        mode=mode, rho=None, eta_multiplier=1e-9, trace=False, out=None, csv=None
    )
    try:
        return _run_one(path, ns)
    except OpdError:
        return EXIT_INVARIANT


def cmd_oracle(args) -> int:
    from .auction import AuctionInstance
    from .covering import CoveringInstance
    from .offline import auction_opt, covering_opt, packing_opt
    from .packing import PackingInstance

    instance = harness.load_instance(args.instance)
    if isinstance(instance, CoveringInstance):
        res = covering_opt(instance)
    elif isinstance(instance, PackingInstance):
        res = packing_opt(instance)
    elif isinstance(instance, AuctionInstance):
        res = auction_opt(instance)
    else:
        raise TypeError(type(instance))
    print(f"value={res.value:.17g}")
    print(f"status={res.status}")
    print(f"certificate={res.certificate:.17g}")
    if res.detail:
        print(f"detail={res.detail}")
    if res.status == "failed":
        return EXIT_DISAGREEMENT
    if res.status == "unbounded":
        return EXIT_UNBOUNDED
    return EXIT_OK


def cmd_check(args) -> int:
    instance = harness.load_instance(args.instance)
    with open(args.report) as fh:
        report = RunReport.from_dict(json.load(fh))
    results = harness.check(instance, report)
    ok = True
    for c in results:
        print(f"check.{c.name}={'pass' if c.passed else 'FAIL'} residual={c.residual:.6g}")
        ok = ok and c.passed
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opd", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--family", required=True,
                   help="random-poly | lp-linear-forms | mixed-cover-pack | random-packing | random-auction")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="family parameter, repeatable (e.g. --param n=3 --param tau=2)")
    g.add_argument("--out", help="output path (stdout if omitted)")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run an instance and check invariants")
    r.add_argument("--instance", help="instance file")
    r.add_argument("--glob", help="run every matching instance")
    r.add_argument("--jobs", type=int, default=1, help="parallel workers for --glob")
    r.add_argument("--mode", help="general | sharp | homogeneous | general-poly | lp | packing | auction")
    r.add_argument("--rho", type=float, help="override the growth parameter")
    r.add_argument("--eta-multiplier", type=float, default=1e-9, dest="eta_multiplier")
    r.add_argument("--out", help="write the JSON report here")
    r.add_argument("--csv", help="write the per-round CSV here")
    r.add_argument("--trace", action="store_true", help="keep per-tick selection traces (auction)")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="compute the offline optimum")
    o.add_argument("--instance", required=True)
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("check", help="re-validate a report")
    c.add_argument("--instance", required=True)
    c.add_argument("--report", required=True)
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("OPD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Unbounded as exc:
        print(f"unbounded: {exc}", file=sys.stderr)
        return EXIT_UNBOUNDED
    except OpdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
