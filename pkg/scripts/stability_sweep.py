"""Final Fréchet distance and mode coverage per loss over a range of seeds.

    python scripts/stability_sweep.py --losses ganetic,bce --seeds 10 --out stability.csv
"""
import argparse
import csv

import numpy as np

from lossforge.gan import GanConfig, run_many


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--losses", default="ganetic,bce,least_squares,hinge")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--steps", type=int, default=GanConfig.steps)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="stability.csv")
    args = ap.parse_args()

    cfg = GanConfig(steps=args.steps)
    rows = []
    print(f"{'loss':<16}{'mean':>10}{'std':>10}{'best':>10}{'worst':>10}  coverage")
    for name in args.losses.split(","):
        results = run_many(cfg, name, range(args.seeds), args.workers)
        fds = np.array([fd for _, fd, _, _ in results])
        cov = [c[0] for _, _, _, c in results]
        print(f"{name:<16}{fds.mean():>10.5f}{fds.std():>10.5f}{fds.min():>10.5f}{fds.max():>10.5f}  {cov}")
        for seed, (deg, fd, acc, c) in enumerate(results):
            rows.append((name, seed, fd, acc, c[0], int(deg)))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loss", "seed", "fd", "disc_acc", "covered", "degenerate"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
