"""Rate of clusters mixing several identities, at initialization and at convergence."""
import argparse

from camel.bench import BenchmarkSetting, run_methods


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--k", type=int, default=300)
    args = ap.parse_args()

    print("seed\tinitial\tconverged")
    down = 0
    for seed in range(args.seeds):
        init, conv = run_methods(BenchmarkSetting(k=args.k).with_seed(seed), ("camel",))["purity"]
        down += conv <= init
        print(f"{seed}\t{init:.4f}\t{conv:.4f}", flush=True)
    print(f"# decreased in {down}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
