"""Constraint counts over a grid of dataset sizes for both hash algorithms.

Writes one circuit report per (hash, k, n) into --out and prints the
per-algorithm linear fits produced by ``zkfl report``.

    python scripts/scaling_sweep.py --out runs/scaling --n 20 50 100 200 500
"""
import argparse
import json
from pathlib import Path

from zkfl.scenario import circuit_report, dumps, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/scaling")
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--n", type=int, nargs="+", default=[20, 50, 100, 200, 500])
    ap.add_argument("--d-L", type=int, default=1000)
    ap.add_argument("--hash", nargs="+", default=["poseidon_lite", "mimc7"])
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for alg in args.hash:
        for n in args.n:
            rep = circuit_report(args.k, n, d_L=args.d_L, hash_alg=alg)
            (out / f"{alg}_k{args.k}_n{n}.json").write_text(dumps(rep))
            c = rep["constraints"]
            print(f"{alg:14s} k={args.k} n={n:4d}  weight={c['pi_w']:9d}  cost={c['pi_c']:9d}")
            reports.append(rep)
    summary = summarize(reports)
    (out / "summary.json").write_text(dumps(summary))
    print(json.dumps({"fits": summary.get("fits"), "hash_ratio": summary.get("hash_ratio")}, indent=1))


if __name__ == "__main__":
    main()
