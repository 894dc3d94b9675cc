"""Command-line entry point: ``lossforge {search,eval,shape,compare,train}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Data outputs are deterministic given the flags; wall-clock information
only goes into ``manifest.json``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as E
from . import gan
from . import genetics as G
from . import losses as L
from .config import ConfigError, build_gan_config, build_gp_config, load_config

log = logging.getLogger("lossforge")


class UsageError(Exception):
    pass


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


class Manifest:
    """Run manifest, written before compute starts and finalized at exit."""

    def __init__(self, out_dir, command, config, seed):
        self.path = Path(out_dir) / "manifest.json"
        self.data = {
            "command": command,
            "config": _jsonable(config),
            "seed": seed,
            "version": __version__,
            "started": _now(),
            "finished": None,
            "outputs": [],
            "timings": {},
        }
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2) + "\n")

    def finish(self, outputs, **timings):
        missing = [o for o in outputs if not (self.path.parent / o).exists()]
        if missing:
            raise RuntimeError(f"declared outputs missing: {missing}")
        self.data["outputs"] = sorted(outputs)
        self.data["timings"].update(timings)
        self.data["finished"] = _now()
        self._write()


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _dump(obj):
    return json.dumps(_jsonable(obj), sort_keys=True)


def _resolve_loss(spec):
    """A built-in name, an inline s-expression, or a path to a ``.sexp`` file."""
    try:
        if spec.endswith(".sexp") or Path(spec).is_file():
            path = Path(spec)
            if not path.is_file():
                raise UsageError(f"no such loss file: {spec}")
            return L.from_tree(E.parse(path.read_text().strip()), path.stem)
        return gan.resolve_loss(spec)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except (E.ParseError, E.InvalidTree) as exc:
        raise UsageError(f"invalid loss expression: {exc}") from None


def _gan_config(args, **overrides):
    raw = load_config(args.config)["gan"] if getattr(args, "config", None) else {}
    if getattr(args, "steps", None) is not None:
        overrides["steps"] = args.steps
    return build_gan_config(raw, **overrides)


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands

class GanFitness:
    """GP evaluator: repeated GAN trainings with the candidate loss."""

    def __init__(self, gan_config, runs, std_weight, workers=None):
        self.gan_config = gan_config
        self.runs = runs
        self.std_weight = std_weight
        self.workers = workers

    def __call__(self, tree, seed):
        return gan.evaluate_fitness(tree, self.gan_config, self.runs, seed, self.workers, self.std_weight)


def cmd_search(args):
    raw = load_config(args.config) if args.config else {"gp": {}, "gan": {}}
    overrides = {"seed": args.seed}
    if args.generations is not None:
        overrides["T"] = args.generations
    gp_cfg = build_gp_config(args.config_id if args.config_id is not None else (None if args.config else 1),
                             raw["gp"], **overrides)
    out = _out_dir(args.out)
    if args.proxy_fitness:
        path = Path(args.proxy_fitness)
        text = path.read_text().strip() if path.is_file() else args.proxy_fitness
        try:
            evaluator = G.ProxyFitness(E.parse(text))
        except (E.ParseError, E.InvalidTree) as exc:
            raise UsageError(f"invalid proxy target: {exc}") from None
        gan_cfg = None
    else:
        gan_cfg = build_gan_config(raw["gan"], **({"steps": args.steps} if args.steps is not None else {}))
        evaluator = GanFitness(gan_cfg, gp_cfg.fitness_runs, gp_cfg.std_weight)

    resume = G.load_checkpoint(args.resume) if args.resume else None
    config_dump = {"gp": dataclasses.asdict(gp_cfg), "gan": None if gan_cfg is None else gan_cfg.to_dict(),
                   "proxy_fitness": args.proxy_fitness}
    manifest = Manifest(out, "search", config_dump, args.seed)

    history_path = out / "history.jsonl"
    ckpt_path = out / "checkpoint.json"
    lines = [] if resume is None else [_dump(r) for r in resume["history"]]
    timings = []
    t_last = time.perf_counter()

    def on_generation(rec, state):
        nonlocal t_last
        lines.append(_dump(rec.to_dict()))
        history_path.write_text("\n".join(lines) + "\n")
        G.save_checkpoint(ckpt_path, state)
        now = time.perf_counter()
        timings.append({"generation": rec.generation, "wall_time": now - t_last})
        t_last = now
        log.info("gen %d best=%.6g mean=%.6g archive=%d", rec.generation, rec.best_scalar,
                 rec.mean_scalar, rec.archive_size)

    result = G.run_gp(gp_cfg, evaluator, on_generation=on_generation, resume=resume)
    if not history_path.exists():
        history_path.write_text("\n".join(lines) + ("\n" if lines else ""))
    (out / "best.sexp").write_text(E.serialize(result.best.tree) + "\n")
    (out / "best.json").write_text(_dump({"expr": E.serialize(result.best.tree),
                                          "fitness": result.best.fitness.to_dict(),
                                          "evaluations": result.evaluations}) + "\n")
    outputs = ["history.jsonl", "best.sexp", "best.json"] + (["checkpoint.json"] if ckpt_path.exists() else [])
    manifest.finish(outputs, generations=timings)
    print(_dump({"best": E.serialize(result.best.tree), "scalar": result.best.scalar}))
    return 0


def cmd_eval(args):
    loss = _resolve_loss(args.loss)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    cfg = _gan_config(args)
    rec = gan.evaluate_fitness(loss, cfg, args.runs, args.seed)
    print(_dump(rec.to_dict()))
    return 0


def cmd_shape(args):
    loss = _resolve_loss(args.loss)
    if args.grid < 16:
        raise UsageError("--grid must be >= 16")
    if not loss.expects_bounded_pred:
        raise UsageError(f"loss {loss.name!r} reads raw scores; shape analysis covers y_pred in [0, 1]")
    rep = L.shape_report(loss, args.y_real, args.grid)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        _write_csv(args.out, ["y_pred", "loss", "gradient"],
                   [(x, v, g) for (x, v), (_, g) in zip(rep.samples, rep.gradients)])
    print(_dump({"loss": loss.name, "y_real": rep.y_real, "argmin": rep.argmin, "min_value": rep.min_value}))
    return 0


def cmd_compare(args):
    names = [s.strip() for s in args.losses.split(",") if s.strip()]
    if not names:
        raise UsageError("--losses needs at least one loss")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    resolved = [(n, _resolve_loss(n)) for n in names]
    cfg = _gan_config(args)
    out = _out_dir(args.out)
    manifest = Manifest(out, "compare", {"losses": names, "seeds": args.seeds, "gan": cfg.to_dict()}, args.seed)
    rows, runs = [], []
    for name, loss in resolved:
        seeds = [args.seed + i for i in range(args.seeds)]
        results = gan.run_many(cfg, loss, seeds)
        fds = np.array([G.WORST_FITNESS if deg else fd for deg, fd, _, _ in results])
        cov = np.array([c[0] / c[1] for _, _, _, c in results])
        rows.append((name, fds.min(), fds.max(), fds.mean(), fds.std(), cov.mean()))
        for s, (deg, fd, acc, c) in zip(seeds, results):
            runs.append((name, s, fd, acc, c[0], c[1], int(deg)))
    _write_csv(out / "summary.csv", ["loss", "best", "worst", "mean", "std", "coverage"], rows)
    _write_csv(out / "runs.csv", ["loss", "seed", "fd", "disc_acc", "covered", "modes", "degenerate"], runs)
    manifest.finish(["summary.csv", "runs.csv"])
    return 0


def cmd_train(args):
    loss = _resolve_loss(args.loss)
    try:
        loss_on = gan.normalize_loss_on(args.loss_on)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = _gan_config(args, loss_on=loss_on, seed=args.seed)
    out = _out_dir(args.out)
    manifest = Manifest(out, "train", {"loss": args.loss, "gan": cfg.to_dict()}, args.seed)
    trained = gan.train_gan(cfg, loss)
    rng = np.random.default_rng([args.seed, 7])
    real = gan.sample_dataset(cfg.dataset, cfg.eval_samples, rng)
    fake = trained.generate(cfg.eval_samples, rng)
    _write_csv(out / "samples.csv", ["x", "y", "source"],
               [(float(x), float(y), "real") for x, y in real] + [(float(x), float(y), "generated") for x, y in fake])
    _write_csv(out / "history.csv", ["step", "fd", "disc_acc"], trained.history)
    summary = {
        "loss": loss.name,
        "loss_on": loss_on,
        "degenerate": trained.degenerate,
        "final_fd": trained.final_fd,
        "final_disc_accuracy": trained.final_accuracy,
        "covered_modes": trained.coverage[0],
        "total_modes": trained.coverage[1],
    }
    (out / "summary.json").write_text(_dump(summary) + "\n")
    manifest.finish(["samples.csv", "history.csv", "summary.json"])
    print(_dump(summary))
    return 0


# -------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="lossforge", description="GP search over GAN loss functions on a desk-scale GAN.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def gan_opts(sp):
        sp.add_argument("--config", help="key=value config file (gan.* keys)")
        sp.add_argument("--steps", type=int, help="override gan.steps")
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("search", help="run a GP loss search")
    s.add_argument("--config-id", type=int, help="Table B configuration, 1-8")
    s.add_argument("--config", help="key=value config file (gp.* and gan.* keys)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--proxy-fitness", metavar="TARGET", help="s-expression (or .sexp file) for the cheap grid fitness")
    s.add_argument("--generations", type=int, help="override gp.T")
    s.add_argument("--steps", type=int, help="override gan.steps")
    s.add_argument("--resume", help="checkpoint.json to continue from")
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("eval", help="fitness of one loss over repeated trainings")
    e.add_argument("--loss", required=True)
    e.add_argument("--runs", type=int, default=5)
    gan_opts(e)
    e.set_defaults(func=cmd_eval)

    sh = sub.add_parser("shape", help="loss and gradient curves over y_pred in [0, 1]")
    sh.add_argument("--loss", required=True)
    sh.add_argument("--y-real", type=int, choices=(0, 1), default=1)
    sh.add_argument("--grid", type=int, default=512)
    sh.add_argument("--out", help="CSV path")
    sh.set_defaults(func=cmd_shape)

    c = sub.add_parser("compare", help="best/worst/mean/std final distance per loss over seeds")
    c.add_argument("--losses", required=True, help="comma-separated loss names or .sexp files")
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--out", required=True)
    gan_opts(c)
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("train", help="train one GAN and dump samples and history")
    t.add_argument("--loss", required=True)
    t.add_argument("--loss-on", default="both", help="both | gen | disc")
    t.add_argument("--out", required=True)
    gan_opts(t)
    t.set_defaults(func=cmd_train)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lossforge: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"lossforge: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
