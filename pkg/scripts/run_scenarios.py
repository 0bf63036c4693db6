"""Run every scenario JSON in a directory through the protocol and summarize.

    python scripts/run_scenarios.py scenarios/ --out runs/
"""
import argparse
from pathlib import Path

from zkfl.scenario import Scenario, dumps, run, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("scenarios")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for path in sorted(Path(args.scenarios).glob("*.json")):
        rep = run(Scenario.load(path))
        (out / path.name).write_text(dumps(rep))
        bad = [r["address"] for r in rep["clients"] if not (r["weight"]["ok"] and r["cost"]["ok"])]
        print(f"{path.name}: {len(rep['clients']) - len(bad)}/{len(rep['clients'])} clients accepted"
              + (f", rejected {bad}" if bad else ""))
        reports.append(rep)
    if reports:
        (out / "summary.json").write_text(dumps(summarize(reports)))


if __name__ == "__main__":
    main()
