"""Built-in per-sample GAN losses and loss-shape analysis.

Every loss maps ``(y_real, y_pred) -> real`` elementwise; the batch loss
is the mean over samples.  The discovered losses (GANetic and f1-f8) are
stored as expression trees so that a built-in and its parsed s-expression
are the very same program.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as E

EPS = E.DEFAULT_EPS
GANETIC_ALPHA = 3.985

# Per-sample forms of the discovered losses, as s-expressions.
DISCOVERED = {
    "ganetic": "(add (mul yp (mul yp yp)) (sqrt (mul 3.985 (div yr yp))))",
    "f1": (
        "(sub (add (add (exp 2.2061) (sin 1.7577))"
        " (mul (sub yr 4.092) (mul (sub yr 4.092) (sub yr 4.092))))"
        " (log (sub yr yp)))"
    ),
    "f2": "(exp (cos (sqrt (sub yr yp))))",
    "f3": "(mul (sqrt (add yr (log yp))) (mul (sqrt (add yr (log yp))) (sqrt (add yr (log yp)))))",
    "f4": "(add (mul yp (mul yp yp)) (sqrt (mul 3.985 (div yr yp))))",
    "f5": (
        "(add (mul (sqrt (log yp)) (mul (sqrt (log yp)) (sqrt (log yp))))"
        " (div (log (mul yp (mul yp yp))) (mul (mul 3.6278 yr) (mul yp yp))))"
    ),
    "f6": (
        "(mul (exp (sub (cos yp) (mul yp yp)))"
        " (mul (mul (sub yp yr) (sub yp yr)) (mul (sub yp yr) (sub yp yr))))"
    ),
    "f7": "(add (sin (add (mul 1.0657 yr) (div 0.4129 yp))) (cos (mul (add yr yp) (add yr yp))))",
    "f8": "(sub (mul (mul yp (mul (cos yr) (cos yr))) (log (mul yr yp))) (sqrt (log yp)))",
}


@dataclass(frozen=True)
class LossFunction:
    """A per-sample loss and its derivative with respect to ``y_pred``.

    ``expects_bounded_pred`` is False for losses that read the raw
    discriminator score instead of the sigmoid output.  ``generator`` and
    ``generator_gradient`` override what the generator minimizes on
    ``D(G(z))``; by default it is ``per_sample(1, .)``.
    """

    name: str
    per_sample: Callable
    gradient: Callable
    expects_bounded_pred: bool = True
    generator: Callable | None = None
    generator_gradient: Callable | None = None
    tree: E.ExprTree | None = None

    def __call__(self, y_real, y_pred):
        return self.per_sample(y_real, y_pred)

    def batch(self, y_real, y_pred):
        return float(np.mean(self.per_sample(y_real, y_pred)))

    def generator_loss(self, y_pred):
        if self.generator is not None:
            return self.generator(y_pred)
        return self.per_sample(1.0, y_pred)

    def generator_grad(self, y_pred):
        if self.generator_gradient is not None:
            return self.generator_gradient(y_pred)
        return self.gradient(1.0, y_pred)

    def to_sexpr(self):
        if self.tree is None:
            raise ValueError(f"loss {self.name!r} has no expression-tree form")
        return E.serialize(self.tree)


def from_tree(tree, name=None, eps=EPS):
    """Wrap an expression tree as a loss; the gradient comes from ``differentiate``."""
    tree = E.ExprTree(tree) if not isinstance(tree, E.ExprTree) else tree
    return LossFunction(
        name or E.serialize(tree),
        _TreeProgram(tree.root, eps),
        _TreeProgram(E.differentiate(tree), eps),
        tree=tree,
    )


class _TreeProgram:
    """Picklable ``(y_real, y_pred) -> value`` wrapper around a node."""

    def __init__(self, node, eps):
        self.node = node
        self.eps = eps

    def __call__(self, y_real, y_pred):
        return E.evaluate(self.node, y_pred, y_real, self.eps)


# ----------------------------------------------------------------- baselines

def _bce(y, p):
    return -(y * np.log(p + EPS) + (1 - y) * np.log(1 - p + EPS))


def _bce_grad(y, p):
    return -y / (p + EPS) + (1 - y) / (1 - p + EPS)


def _least_squares(y, p):
    return (p - y) ** 2


def _least_squares_grad(y, p):
    return 2 * (p - y)


def _hinge(y, s):
    # y in {0, 1} is mapped to a +-1 margin label
    t = 2 * np.asarray(y, dtype=float) - 1
    return np.maximum(0.0, 1 - t * s)


def _hinge_grad(y, s):
    t = 2 * np.asarray(y, dtype=float) - 1
    return np.where(1 - t * s > 0, -t, 0.0)


def _hinge_generator(s):
    return -s


def _hinge_generator_grad(s):
    return -np.ones_like(np.asarray(s, dtype=float))


def _wasserstein(y, s):
    t = 2 * np.asarray(y, dtype=float) - 1
    return -t * s


def _wasserstein_grad(y, s):
    t = 2 * np.asarray(y, dtype=float) - 1
    return -t * np.ones_like(np.asarray(s, dtype=float))


def _minimax_generator(p):
    # saturating form: G minimizes log(1 - D(G(z)))
    return np.log(1 - p + EPS)


def _minimax_generator_grad(p):
    return -1 / (1 - p + EPS)


BASELINES = {
    "bce": LossFunction("bce", _bce, _bce_grad),
    "least_squares": LossFunction("least_squares", _least_squares, _least_squares_grad),
    "hinge": LossFunction(
        "hinge", _hinge, _hinge_grad, expects_bounded_pred=False,
        generator=_hinge_generator, generator_gradient=_hinge_generator_grad,
    ),
    "wasserstein": LossFunction("wasserstein", _wasserstein, _wasserstein_grad, expects_bounded_pred=False),
    "adversarial": LossFunction(
        "adversarial", _bce, _bce_grad,
        generator=_minimax_generator, generator_gradient=_minimax_generator_grad,
    ),
}
ALIASES = {"adversarial_minimax": "adversarial", "lsgan": "least_squares", "ls": "least_squares"}


def _build_registry():
    reg = {name: from_tree(E.parse(text), name) for name, text in DISCOVERED.items()}
    reg.update(BASELINES)
    return reg


REGISTRY = _build_registry()


def get(name):
    """Look up a built-in loss by name (case-insensitive)."""
    key = name.lower()
    key = ALIASES.get(key, key)
    try:
        return REGISTRY[key]
    except KeyError:
        raise KeyError(f"unknown loss {name!r}; choose from {', '.join(sorted(REGISTRY))}") from None


def names():
    return sorted(REGISTRY)


def ganetic(y_real, y_pred):
    return REGISTRY["ganetic"].per_sample(y_real, y_pred)


def f1(y_real, y_pred):
    return REGISTRY["f1"].per_sample(y_real, y_pred)


def f2(y_real, y_pred):
    return REGISTRY["f2"].per_sample(y_real, y_pred)


def f3(y_real, y_pred):
    return REGISTRY["f3"].per_sample(y_real, y_pred)


def f4(y_real, y_pred):
    return REGISTRY["f4"].per_sample(y_real, y_pred)


def f5(y_real, y_pred):
    return REGISTRY["f5"].per_sample(y_real, y_pred)


def f6(y_real, y_pred):
    return REGISTRY["f6"].per_sample(y_real, y_pred)


def f7(y_real, y_pred):
    return REGISTRY["f7"].per_sample(y_real, y_pred)


def f8(y_real, y_pred):
    return REGISTRY["f8"].per_sample(y_real, y_pred)


def bce(y_real, y_pred):
    return _bce(y_real, y_pred)


def least_squares(y_real, y_pred):
    return _least_squares(y_real, y_pred)


def hinge(y_real, score):
    return _hinge(y_real, score)


def wasserstein(y_real, score):
    return _wasserstein(y_real, score)


def adversarial_minimax(y_real, y_pred):
    return _bce(y_real, y_pred)


# ------------------------------------------------------------ shape analysis

@dataclass
class ShapeReport:
    y_real: int
    samples: list
    gradients: list
    argmin: float
    min_value: float


def golden_section(f, lo, hi, tol=1e-6):
    """Minimize a unimodal ``f`` on ``[lo, hi]``."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2


def shape_report(loss, y_real, grid_n=512, tol=1e-6):
    """Sample ``loss`` and its gradient on a uniform grid over [0, 1] and locate the minimum.

    The grid minimum is refined by golden-section search inside its
    neighbouring cells; grid endpoints compete with the refined point so a
    monotone loss reports the exact boundary.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    if y_real not in (0, 1):
        raise ValueError("y_real must be 0 or 1")
    xs = np.linspace(0.0, 1.0, grid_n)
    ys = np.asarray(loss.per_sample(float(y_real), xs), dtype=float)
    gs = np.asarray(loss.gradient(float(y_real), xs), dtype=float)
    i = int(np.nanargmin(ys))

    def f(x):
        return float(loss.per_sample(float(y_real), x))

    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid_n - 1)]
    x_star = golden_section(f, lo, hi, tol)
    candidates = [(f(x_star), x_star), (float(ys[i]), float(xs[i]))]
    value, arg = min(candidates)
    return ShapeReport(
        y_real=int(y_real),
        samples=list(zip(xs.tolist(), ys.tolist())),
        gradients=list(zip(xs.tolist(), gs.tolist())),
        argmin=float(arg),
        min_value=float(value),
    )
