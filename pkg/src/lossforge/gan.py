"""Desk-scale GAN: 2-D mixture data, dense nets with hand-written backprop, Adam.

The discriminator exposes both its raw score ``s`` and ``sigmoid(s)``; a
loss reads whichever it declares (``LossFunction.expects_bounded_pred``).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import expr as E
from . import losses as L
from .genetics import FitnessRecord, WORST_FITNESS
from .metrics import discriminator_accuracy, frechet_distance, mode_coverage

LOSS_ON = ("both", "generator", "discriminator")
_LOSS_ON_ALIASES = {"gen": "generator", "disc": "discriminator", "g": "generator", "d": "discriminator"}
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class DatasetSpec:
    """Gaussian mixture with modes on a ring (``k`` modes) or a ``k x k`` grid."""

    kind: str = "ring"
    k: int = 8
    radius: float = 2.0
    spacing: float = 2.0
    sigma: float = 0.02
    n_samples: int = 1024

    def __post_init__(self):
        if self.kind not in ("ring", "grid"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.k < 1 or self.sigma < 0 or self.n_samples < 1:
            raise ValueError("invalid dataset spec")

    def centers(self):
        if self.kind == "ring":
            ang = 2 * np.pi * np.arange(self.k) / self.k
            return np.stack([self.radius * np.cos(ang), self.radius * np.sin(ang)], axis=1)
        offs = (np.arange(self.k) - (self.k - 1) / 2) * self.spacing
        gx, gy = np.meshgrid(offs, offs, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def sample_dataset(spec, n, rng):
    """Draw ``n`` points: uniform mode choice plus isotropic N(0, sigma^2) noise."""
    centers = spec.centers()
    idx = rng.integers(len(centers), size=n)
    return centers[idx] + spec.sigma * rng.standard_normal((n, 2))


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 2
    gen_hidden: tuple = (32, 32)
    disc_hidden: tuple = (32, 32)
    data_dim: int = 2
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 128
    steps: int = 4000
    eval_interval: int = 200
    eval_samples: int = 1024
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    loss_on: str = "both"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loss_on", normalize_loss_on(self.loss_on))
        object.__setattr__(self, "gen_hidden", tuple(self.gen_hidden))
        object.__setattr__(self, "disc_hidden", tuple(self.disc_hidden))
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if min(self.gen_hidden + self.disc_hidden + (self.latent_dim, self.data_dim)) < 1:
            raise ValueError("layer widths must be >= 1")
        if self.steps < 0 or self.eval_interval < 1 or self.eval_samples < 3:
            raise ValueError("invalid schedule")

    @property
    def gen_layers(self):
        return (self.latent_dim, *self.gen_hidden, self.data_dim)

    @property
    def disc_layers(self):
        return (self.data_dim, *self.disc_hidden, 1)

    def to_dict(self):
        return asdict(self)


def normalize_loss_on(value):
    v = _LOSS_ON_ALIASES.get(value, value)
    if v not in LOSS_ON:
        raise ValueError(f"loss_on must be one of {LOSS_ON}, got {value!r}")
    return v


# ------------------------------------------------------------------ networks

class MLP:
    """Dense net, LeakyReLU(0.2) hidden layers, linear output."""

    def __init__(self, widths, rng):
        self.params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1 / math.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, fan_out))

    @property
    def n_layers(self):
        return len(self.params) // 2

    def forward(self, x):
        cache = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < self.n_layers - 1:
                cache.append(z)
                h = np.where(z > 0, z, LEAKY_SLOPE * z)
                cache.append(h)
            else:
                h = z
        return h, cache

    def backward(self, cache, dout):
        """Gradients of ``sum(out * dout)`` w.r.t. params, and w.r.t. the input."""
        grads = [None] * len(self.params)
        delta = dout
        for i in reversed(range(self.n_layers)):
            h_in = cache[2 * i]
            grads[2 * i] = h_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * i].T
            if i > 0:
                z = cache[2 * i - 1]
                delta = np.where(z > 0, delta, LEAKY_SLOPE * delta)
        return grads, delta

    def __call__(self, x):
        return self.forward(x)[0]


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sigmoid(s):
    return 0.5 * (1 + np.tanh(0.5 * s))


# ------------------------------------------------------------------ training

class DegenerateTraining(RuntimeError):
    pass


def resolve_loss(loss):
    """Accept a LossFunction, an ExprTree/Node, a built-in name, or an s-expression."""
    if isinstance(loss, L.LossFunction):
        return loss
    if isinstance(loss, (E.ExprTree, E.Node)):
        return L.from_tree(E.ExprTree(loss))
    if isinstance(loss, str):
        text = loss.strip()
        if text.startswith("("):
            return L.from_tree(E.parse(text))
        return L.get(text)
    raise TypeError(f"cannot interpret {loss!r} as a loss")


def _disc_terms(loss, y, scores):
    """Per-sample loss values and d(loss)/d(score) for the discriminator."""
    if loss.expects_bounded_pred:
        p = sigmoid(scores)
        return loss.per_sample(y, p), loss.gradient(y, p) * p * (1 - p)
    return loss.per_sample(y, scores), loss.gradient(y, scores)


def _gen_terms(loss, scores):
    if loss.expects_bounded_pred:
        p = sigmoid(scores)
        return loss.generator_loss(p), loss.generator_grad(p) * p * (1 - p)
    return loss.generator_loss(scores), loss.generator_grad(scores)


def _check(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DegenerateTraining("non-finite loss or gradient")


def discriminator_step_grads(disc, loss, x_real, x_fake):
    """Value and parameter gradients of mean loss(1, D(x_real)) + mean loss(0, D(x_fake))."""
    n_r, n_f = len(x_real), len(x_fake)
    x = np.concatenate([x_real, x_fake])
    s, cache = disc.forward(x)
    s = s[:, 0]
    lr_, gr = _disc_terms(loss, 1.0, s[:n_r])
    lf, gf = _disc_terms(loss, 0.0, s[n_r:])
    _check(lr_, gr, lf, gf)
    value = float(np.mean(lr_) + np.mean(lf))
    dout = np.concatenate([gr / n_r, gf / n_f])[:, None]
    grads, _ = disc.backward(cache, dout)
    return value, grads


def generator_step_grads(gen, disc, loss, z):
    """Value and generator-parameter gradients of mean generator loss on D(G(z))."""
    x, g_cache = gen.forward(z)
    s, d_cache = disc.forward(x)
    lv, gs = _gen_terms(loss, s[:, 0])
    _check(lv, gs)
    _, dx = disc.backward(d_cache, (gs / len(z))[:, None])
    grads, _ = gen.backward(g_cache, dx)
    return float(np.mean(lv)), grads


@dataclass
class TrainedGan:
    generator: MLP
    discriminator: MLP
    config: GanConfig
    history: list  # (step, fd, disc_accuracy)
    degenerate: bool = False
    coverage: tuple = (0, 0)

    @property
    def final_fd(self):
        return self.history[-1][1]

    @property
    def final_accuracy(self):
        return self.history[-1][2]

    def generate(self, n, rng):
        z = rng.standard_normal((n, self.config.latent_dim))
        return self.generator(z)


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    init, train, evals = ss.spawn(3)
    return np.random.default_rng(init), np.random.default_rng(train), evals


def _evaluate(gen, disc, config, eval_seq, step):
    # a fresh stream per evaluation keeps training draws independent of eval cadence
    rng = np.random.default_rng([int(eval_seq.generate_state(1)[0]), step])
    real = sample_dataset(config.dataset, config.eval_samples, rng)
    fake = gen(rng.standard_normal((config.eval_samples, config.latent_dim)))
    if not np.all(np.isfinite(fake)):
        raise DegenerateTraining("generator produced non-finite samples")
    fd = frechet_distance(real, fake)
    acc = discriminator_accuracy(sigmoid(disc(real)[:, 0]), sigmoid(disc(fake)[:, 0]))
    return fd, acc, fake


def train_gan(config, loss, rng=None):
    """Alternate one D step and one G step for ``config.steps`` iterations.

    ``rng`` may override the seed (an int or ``numpy.random.Generator`` used
    to draw one); otherwise ``config.seed`` is used.  Networks excluded by
    ``config.loss_on`` train with BCE instead.  Any non-finite loss or
    gradient aborts the run and marks it degenerate.
    """
    loss = resolve_loss(loss)
    bce = L.get("bce")
    d_loss = loss if config.loss_on in ("both", "discriminator") else bce
    g_loss = loss if config.loss_on in ("both", "generator") else bce

    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2**63))
    elif rng is not None:
        seed = int(rng)
    else:
        seed = config.seed
    init_rng, rng, eval_seq = _streams(seed)
    gen = MLP(config.gen_layers, init_rng)
    disc = MLP(config.disc_layers, init_rng)
    g_opt = Adam(gen.params, config.lr, config.beta1, config.beta2)
    d_opt = Adam(disc.params, config.lr, config.beta1, config.beta2)

    history = []
    fake = None
    degenerate = False
    with np.errstate(all="ignore"):
        try:
            fd, acc, fake = _evaluate(gen, disc, config, eval_seq, 0)
            history.append((0, fd, acc))
            for step in range(1, config.steps + 1):
                x_real = sample_dataset(config.dataset, config.batch_size, rng)
                z = rng.standard_normal((config.batch_size, config.latent_dim))
                _, d_grads = discriminator_step_grads(disc, d_loss, x_real, gen(z))
                _check(*d_grads)
                d_opt.step(d_grads)

                z = rng.standard_normal((config.batch_size, config.latent_dim))
                _, g_grads = generator_step_grads(gen, disc, g_loss, z)
                _check(*g_grads)
                g_opt.step(g_grads)

                if step % config.eval_interval == 0 or step == config.steps:
                    fd, acc, fake = _evaluate(gen, disc, config, eval_seq, step)
                    history.append((step, fd, acc))
        except (DegenerateTraining, ValueError, np.linalg.LinAlgError):
            degenerate = True
    coverage = mode_coverage(fake, config.dataset) if fake is not None and not degenerate else (0, len(config.dataset.centers()))
    if degenerate and not history:
        history.append((0, WORST_FITNESS, 0.0))
    return TrainedGan(gen, disc, config, history, degenerate, coverage)


def _fitness_run(args):
    config, loss, seed = args
    t = train_gan(config, loss, seed)
    return t.degenerate, t.final_fd, t.final_accuracy, t.coverage


def worker_count(requested=None):
    """Resolve a worker count; ``LOSSFORGE_THREADS`` caps it (0 = auto)."""
    if requested is None:
        requested = int(os.environ.get("LOSSFORGE_THREADS", "1") or 1)
    if requested <= 0:
        requested = os.cpu_count() or 1
    return requested


def run_many(config, loss, seeds, workers=None):
    """Train one GAN per seed; results come back in seed order."""
    loss = resolve_loss(loss)
    jobs = [(config, loss, s) for s in seeds]
    workers = min(worker_count(workers), len(jobs))
    if workers <= 1:
        return [_fitness_run(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_fitness_run, jobs))


def evaluate_fitness(loss, gan_config=None, runs=5, base_seed=0, workers=None, std_weight=1.0):
    """Train ``runs`` GANs with seeds ``base_seed + i`` and summarize final Fréchet distances."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    gan_config = gan_config or GanConfig()
    results = run_many(gan_config, loss, [base_seed + i for i in range(runs)], workers)
    per_run = []
    degenerate = False
    for deg, fd, acc, _cov in results:
        degenerate |= deg
        per_run.append((WORST_FITNESS if deg else fd, acc))
    return FitnessRecord.from_runs(per_run, degenerate=degenerate, std_weight=std_weight)
