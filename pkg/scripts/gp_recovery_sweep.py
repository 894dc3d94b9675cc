"""How often the GP recovers a known target under the grid proxy fitness.

Counts seeds whose best-ever scalar drops below a threshold, per Table B
configuration.  Useful for judging how hard a target is before spending
GAN-training time on a real search.

    python scripts/gp_recovery_sweep.py --configs 1-8 --seeds 20 --generations 50
"""
import argparse

from lossforge.genetics import GpConfig, ProxyFitness, run_gp


def parse_range(text):
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", default="(mul (sub yr yp) (sub yr yp))")
    ap.add_argument("--configs", default="1-8")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--generations", type=int, default=50)
    ap.add_argument("--population", type=int, default=10)
    ap.add_argument("--threshold", type=float, default=1e-6)
    args = ap.parse_args()

    proxy = ProxyFitness(args.target)
    for cid in parse_range(args.configs):
        finals = []
        for seed in range(args.seeds):
            cfg = GpConfig.from_table(cid, T=args.generations, n=args.population, seed=seed)
            finals.append(run_gp(cfg, proxy).best.scalar)
        hits = sum(f < args.threshold for f in finals)
        print(f"config-{cid}: {hits}/{args.seeds} below {args.threshold:g}, "
              f"median best {sorted(finals)[len(finals) // 2]:.4g}")


if __name__ == "__main__":
    main()
