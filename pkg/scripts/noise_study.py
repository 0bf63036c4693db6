"""Empirical behaviour of the table-lookup Laplace noise.

Three measurements:
  * hash-driven draws vs the table's uniform pmf (chi-square) and variance;
  * variance of the aggregated noise with many clients, hash-driven;
  * how often a 200-run variance estimate lands within 20% of 2*lambda^2/|I|
    per component (index sampling only, so it is cheap to repeat).

    python scripts/noise_study.py --draws 100000 --seeds 0 1 2 --trials 2000
"""
import argparse

import numpy as np
from scipy import stats

from zkfl.dpnoise import PrivacyParams, build_noise_table, derive_randomness, perturb_weights
from zkfl.fieldcodec import ScaledMatrix
from zkfl.ledger import fedavg
from zkfl.merklehash import hash_sponge


def draw_fit(draws, d_L, d):
    table = build_noise_table(PrivacyParams(epsilon=1.0, delta_sens=10**d, d_L=d_L, d=d))
    counts = np.zeros(d_L - 1, dtype=int)
    for i in range(draws):
        _, p = derive_randomness(hash_sponge([i // 1000, 7]), i, d_L)
        counts[p - 1] += 1
    vals = np.array(table.ints()) / 10**d
    chi2, pval = stats.chisquare(counts)
    emp = float(np.repeat(vals, counts).var())
    print(f"draws={draws} chi2={chi2:.1f} p={pval:.3f} var={emp:.4f} exact={table.variance_real():.4f}")


def aggregate(seed, runs, clients, k, d_L, d):
    params = PrivacyParams.default(1.0, d_L, d)
    table = build_noise_table(params)
    rng = np.random.default_rng(seed)
    devs = np.zeros((runs, k + 1))
    for r in range(runs):
        ws, noisy = [], []
        for c in range(clients):
            w = ScaledMatrix.column([int(v) for v in rng.integers(-(10**d), 10**d, size=k + 1)], d)
            y = [int(v) for v in rng.integers(-(10**6), 10**6, size=k + 1)]
            ws.append(w)
            noisy.append(perturb_weights(w, hash_sponge([r, c]), y, table)[0])
        devs[r] = (np.array(fedavg(noisy).ints()) - np.array(fedavg(ws).ints())) / 10**d
    target = 2 * params.lam_real**2 / clients
    print(f"seed={seed} variance per component {np.round(devs.var(axis=0), 4).tolist()} target {target:.4f}")


def pass_rate(trials, runs, clients, k, d_L, d, seed=0):
    params = PrivacyParams.default(1.0, d_L, d)
    vals = np.array(build_noise_table(params).ints()) / 10**d
    target = 2 * params.lam_real**2 / clients
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(trials):
        dev = vals[rng.integers(0, d_L - 1, size=(runs, clients, k + 1))].mean(axis=1)
        ok += bool(np.all(np.abs(dev.var(axis=0) - target) <= 0.2 * target))
    print(f"per-component 20% band met in {ok}/{trials} trials ({100 * ok / trials:.1f}%)")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--seeds", type=int, nargs="*", default=[5])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--clients", type=int, default=100)
    ap.add_argument("--k", type=int, default=4)
    args = ap.parse_args()
    draw_fit(args.draws, 1000, 5)
    for s in args.seeds:
        aggregate(s, args.runs, args.clients, args.k, 1000, 5)
    pass_rate(args.trials, args.runs, args.clients, args.k, 1000, 5)


if __name__ == "__main__":
    main()
