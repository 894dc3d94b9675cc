"""Apply a loss to the generator, the discriminator, or both (BCE elsewhere).

    python scripts/ablation.py --loss ganetic --seeds 5
"""
import argparse
from dataclasses import replace

import numpy as np

from lossforge.gan import LOSS_ON, GanConfig, run_many


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--loss", default="ganetic")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=GanConfig.steps)
    args = ap.parse_args()
    base = GanConfig(steps=args.steps)
    for on in LOSS_ON:
        runs = run_many(replace(base, loss_on=on), args.loss, range(args.seeds))
        fds = np.array([fd for _, fd, _, _ in runs])
        print(f"{on:<14} mean FD {fds.mean():.5f}  std {fds.std():.5f}")


if __name__ == "__main__":
    main()
