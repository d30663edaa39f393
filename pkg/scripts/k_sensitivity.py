"""CAMEL rank-1 as the number of clusters K varies."""
import argparse

import numpy as np

from camel.bench import BenchmarkSetting, run_methods


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    print("seed\t" + "\t".join(f"K={k}" for k in args.k) + "\tspread")
    for seed in range(args.seeds):
        setting = BenchmarkSetting().with_seed(seed)
        r1 = np.array([run_methods(setting, ("camel",), k=k)["camel"] for k in args.k])
        print(f"{seed}\t" + "\t".join(f"{v:.4f}" for v in r1) + f"\t{r1.max() - r1.min():.4f}", flush=True)


if __name__ == "__main__":
    main()
