"""Wall-clock of one CAMEL fit on a large synthetic set (defaults: N = 100,008, V = 6)."""
import argparse
import logging
import os
import time

from camel import CamelConfig, SyntheticSpec, camel_fit, generate_synthetic
from camel.data import l2_normalize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--views", type=int, default=6)
    ap.add_argument("--ids", type=int, default=4167)
    ap.add_argument("--per-view", type=int, default=4)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--k", type=int, default=500)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(asctime)s %(message)s")

    spec = SyntheticSpec(V=args.views, ids=args.ids, per_view_per_id=args.per_view, M=args.dim,
                         latent_dim=args.dim)
    fs = l2_normalize(generate_synthetic(spec))
    t0 = time.perf_counter()
    _, state = camel_fit(fs, CamelConfig(k=args.k))
    dt = time.perf_counter() - t0
    print(f"N={fs.n_samples} V={fs.n_views} M={fs.dim} K={args.k} cpus={os.cpu_count()}")
    print(f"fit {dt:.1f}s, {state.iteration} iterations, converged={state.converged}, "
          f"max constraint residual {max(state.constraint_residuals):.2e}")


if __name__ == "__main__":
    main()
