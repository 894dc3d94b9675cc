"""Write loss and gradient curves over y_pred in [0, 1] for every bounded built-in.

One CSV per (loss, y_real) in --out-dir, plus a one-line argmin summary each.
"""
import argparse
import csv
from pathlib import Path

from lossforge import losses as L


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="shapes")
    ap.add_argument("--grid", type=int, default=512)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in L.names():
        loss = L.get(name)
        if not loss.expects_bounded_pred:
            continue
        for y in (0, 1):
            rep = L.shape_report(loss, y, args.grid)
            with open(out / f"{name}_y{y}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["y_pred", "loss", "gradient"])
                w.writerows((x, v, g) for (x, v), (_, g) in zip(rep.samples, rep.gradients))
            print(f"{name:<14} y_real={y}  argmin={rep.argmin:.6f}  min={rep.min_value:.6g}")


if __name__ == "__main__":
    main()
