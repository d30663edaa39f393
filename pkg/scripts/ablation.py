"""Rank-1 of CAMEL, CMEL, CAMEL_s and raw Euclidean on the synthetic benchmark.

    python scripts/ablation.py --seeds 10 --bias 0 0.5 0.9
"""
import argparse

import numpy as np

from camel.bench import BenchmarkSetting, run_methods

METHODS = ("camel", "cmel", "supervised", "euclidean")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--bias", type=float, nargs="+", default=[0.0, 0.5, 0.9])
    ap.add_argument("--k", type=int, default=300)
    ap.add_argument("--lam", type=float, default=0.01)
    args = ap.parse_args()

    print("bias\tseed\t" + "\t".join(METHODS))
    for bias in args.bias:
        rows = []
        for seed in range(args.seeds):
            s = BenchmarkSetting(k=args.k, lam=args.lam).with_bias(bias).with_seed(seed)
            r = run_methods(s, METHODS)
            rows.append([r[m] for m in METHODS])
            print(f"{bias}\t{seed}\t" + "\t".join(f"{v:.4f}" for v in rows[-1]), flush=True)
        rows = np.array(rows)
        wins = int(np.sum(rows[:, 0] > rows[:, 1]))
        print(f"{bias}\tmean\t" + "\t".join(f"{v:.4f}" for v in rows.mean(0))
              + f"\t# CAMEL > CMEL in {wins}/{args.seeds}")


if __name__ == "__main__":
    main()
