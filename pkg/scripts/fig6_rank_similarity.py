"""Effective rank and mean patch cosine similarity of features across depth.

Writes ``rank_similarity.csv`` with columns
seed, mode, layer, effective_rank, mean_patch_cosine.

Usage: python3 scripts/fig6_rank_similarity.py --out results/fig6 [--seeds 0 1 2]
"""

import argparse
import csv
from pathlib import Path

from fdam import stacklab as sl


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/fig6")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--layers", type=int, default=12)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "rank_similarity.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seed", "mode", "layer", "effective_rank", "mean_patch_cosine"])
        for seed in args.seeds:
            for mode, extra in (("plain", {}), ("attinv", {"high_bias": 0.0})):
                cfg = sl.StackConfig(layers=args.layers, mode=mode, seed=seed, **extra)
                res = sl.run_forward(sl.build_stack(cfg), sl.white_noise(cfg))
                for d in res.diagnostics:
                    w.writerow([seed, mode, d.layer_index, d.effective_rank, d.mean_patch_cosine])
                last = res.diagnostics[-1]
                print(f"seed {seed} {mode:7s} layer {last.layer_index}: erank {last.effective_rank:.2f}  "
                      f"cos {last.mean_patch_cosine:.3f}")


if __name__ == "__main__":
    main()
