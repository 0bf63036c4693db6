"""Command line: ``zkfl gen-data``, ``zkfl run`` and ``zkfl report``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .scenario import Scenario, ScenarioError, dumps, gen_data, report, run


def _scenario(args) -> Scenario:
    sc = Scenario.load(args.scenario) if args.scenario else Scenario()
    if args.seed is not None:
        sc = dataclasses.replace(sc, seed=args.seed)
    return sc


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text + "\n")
        return
    try:
        Path(out).write_text(text + "\n")
    except OSError as e:
        raise ScenarioError(f"cannot write {out}: {e}") from None


def _cmd_gen_data(args) -> None:
    sc = _scenario(args)
    paths = gen_data(sc.k, sc.n, sc.clients, sc.seed, args.out or "data", sc.n_test)
    for p in paths:
        print(p)


def _cmd_run(args) -> None:
    rep = run(_scenario(args))
    _emit(dumps(rep), args.out)
    for row in rep["clients"]:
        w, c = row["weight"], row["cost"]
        status = "pass" if w["ok"] and c["ok"] else f"fail ({w['check'] or c['check'] or c['error']})"
        print(f"{row['address']}: {status}", file=sys.stderr)


def _cmd_report(args) -> None:
    _emit(dumps(report(args.reports)), args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zkfl", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write synthetic client and test CSV files")
    g.add_argument("--scenario", help="scenario JSON (k, n, clients, n_test are used)")
    g.add_argument("--out", help="output directory (default: ./data)")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=_cmd_gen_data)

    r = sub.add_parser("run", help="execute the protocol for one scenario")
    r.add_argument("--scenario", help="scenario JSON (defaults apply when omitted)")
    r.add_argument("--out", help="report path (default: stdout)")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("report", help="fit constraint counts across run reports")
    s.add_argument("reports", nargs="+")
    s.add_argument("--out", help="summary path (default: stdout)")
    s.set_defaults(func=_cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ScenarioError as e:
        print(f"zkfl: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
