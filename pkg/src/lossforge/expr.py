"""Expression trees over ``y_pred``/``y_real`` with protected operators.

Trees are immutable.  A :class:`Node` is the raw structure (also used for
gradient programs); an :class:`ExprTree` is a node that passed the
individual-validity gate: both variables present, only search operators.
"""
from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field

import numpy as np

BINARY = ("add", "sub", "mul", "div")
UNARY = ("sqrt", "log", "exp", "sin", "cos")
OPERATORS = BINARY + UNARY
VAR_PRED = "yp"
VAR_REAL = "yr"
CONST = "const"
TERMINALS = (VAR_PRED, VAR_REAL, CONST)

# Only produced by ``differentiate``; never part of an individual.
# fdiv is unprotected division.
INTERNAL_BINARY = ("fdiv",)
INTERNAL_UNARY = ("neg", "sign", "abs")

ARITY = {op: 2 for op in BINARY + INTERNAL_BINARY}
ARITY.update({op: 1 for op in UNARY + INTERNAL_UNARY})
ARITY.update({t: 0 for t in TERMINALS})

DEFAULT_EPS = 1e-8


class InvalidTree(ValueError):
    """Tree violates the individual invariants."""


class ParseError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at byte {position}")
        self.position = position


@dataclass(frozen=True)
class Node:
    op: str
    children: tuple = ()
    value: float | None = None
    size: int = field(init=False, compare=False, repr=False)
    height: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.op not in ARITY:
            raise ValueError(f"unknown op {self.op!r}")
        if len(self.children) != ARITY[self.op]:
            raise ValueError(f"{self.op} takes {ARITY[self.op]} children, got {len(self.children)}")
        if self.op == CONST:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError("constant must be a finite real")
            object.__setattr__(self, "value", float(self.value))
        elif self.value is not None:
            raise ValueError("only constants carry a value")
        object.__setattr__(self, "size", 1 + sum(c.size for c in self.children))
        object.__setattr__(self, "height", 1 + max((c.height for c in self.children), default=0))

    @property
    def is_terminal(self):
        return not self.children

    def __str__(self):
        return serialize(self)


def const(value):
    return Node(CONST, (), float(value))


YP = Node(VAR_PRED)
YR = Node(VAR_REAL)


def op(name, *children):
    return Node(name, tuple(children))


@dataclass(frozen=True)
class GenConstraints:
    min_height: int = 2
    max_size: int = 100
    const_low: float = -5.0
    const_high: float = 5.0
    epsilon: float = DEFAULT_EPS
    max_init_height: int = 6

    def __post_init__(self):
        if self.min_height < 1:
            raise ValueError("min_height must be >= 1")
        if self.max_size < 3:
            raise ValueError("max_size must be >= 3: both variables need an operator above them")
        if self.max_size < 2 ** self.min_height - 1:
            raise ValueError("max_size must be >= 2**min_height - 1")
        if not self.const_low < self.const_high:
            raise ValueError("const_low must be < const_high")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_init_height < self.min_height:
            raise ValueError("max_init_height must be >= min_height")


@dataclass(frozen=True)
class ExprTree:
    """A candidate loss: a search-operator tree containing both variables."""

    root: Node

    def __post_init__(self):
        if isinstance(self.root, ExprTree):
            object.__setattr__(self, "root", self.root.root)
        bad = [n.op for n in iter_nodes(self.root) if n.op not in OPERATORS + TERMINALS]
        if bad:
            raise InvalidTree(f"operators not allowed in a loss tree: {sorted(set(bad))}")
        present = variables(self.root)
        missing = {VAR_PRED, VAR_REAL} - present
        if missing:
            raise InvalidTree(f"tree lacks required variable(s): {', '.join(sorted(missing))}")

    @property
    def size(self):
        return self.root.size

    @property
    def height(self):
        return self.root.height

    def __str__(self):
        return serialize(self.root)


def _root(tree):
    return tree.root if isinstance(tree, ExprTree) else tree


def measure(tree):
    """Return ``(size, height)``; a lone node has height 1."""
    root = _root(tree)
    return root.size, root.height


def validate(tree, constraints):
    """Raise :class:`InvalidTree` unless ``tree`` is a valid individual under ``constraints``."""
    t = tree if isinstance(tree, ExprTree) else ExprTree(tree)
    if t.size > constraints.max_size:
        raise InvalidTree(f"tree size {t.size} exceeds max_size {constraints.max_size}")
    return t


def iter_nodes(root):
    """Preorder traversal."""
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children))


def positions(root):
    """Preorder list of ``(path, node)``; a path is a tuple of child indices."""
    out = []
    stack = [((), root)]
    while stack:
        path, n = stack.pop()
        out.append((path, n))
        for i in reversed(range(len(n.children))):
            stack.append((path + (i,), n.children[i]))
    return out


def subtree_at(root, path):
    for i in path:
        root = root.children[i]
    return root


def replace_at(root, path, new):
    if not path:
        return new
    i = path[0]
    kids = list(root.children)
    kids[i] = replace_at(kids[i], path[1:], new)
    return Node(root.op, tuple(kids), root.value)


def variables(root):
    return {n.op for n in iter_nodes(_root(root)) if n.op in (VAR_PRED, VAR_REAL)}


# ---------------------------------------------------------------- evaluation

def evaluate(tree, y_pred, y_real, eps=DEFAULT_EPS):
    """Evaluate with protected semantics.

    Works elementwise on floats or numpy arrays.  ``div``, ``sqrt`` and
    ``log`` are protected by ``eps``; ``exp`` overflow propagates as inf.
    """
    with np.errstate(all="ignore"):
        return _eval(_root(tree), y_pred, y_real, eps)


def _eval(n, yp, yr, eps):
    o = n.op
    if o == VAR_PRED:
        return yp
    if o == VAR_REAL:
        return yr
    if o == CONST:
        return n.value
    a = _eval(n.children[0], yp, yr, eps)
    if len(n.children) == 2:
        b = _eval(n.children[1], yp, yr, eps)
        if o == "add":
            return a + b
        if o == "sub":
            return a - b
        if o == "mul":
            return a * b
        if o == "div":
            return np.divide(a, b + eps)
        if o == "fdiv":
            return np.divide(a, b)
    else:
        if o == "sqrt":
            return np.sqrt(np.abs(a) + eps)
        if o == "log":
            return np.log(np.abs(a) + eps)
        if o == "exp":
            return np.exp(a)
        if o == "sin":
            return np.sin(a)
        if o == "cos":
            return np.cos(a)
        if o == "neg":
            return -a
        if o == "sign":
            return np.sign(a)
        if o == "abs":
            return np.abs(a)
    raise AssertionError(o)


# ---------------------------------------------------------- differentiation

ONE = const(1.0)


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return op("add", a, b)


def _mul(a, b):
    if a == ONE:
        return b
    if b == ONE:
        return a
    return op("mul", a, b)


def _neg(a):
    return None if a is None else op("neg", a)


def differentiate(tree, wrt=VAR_PRED):
    """Symbolic derivative of the protected expression w.r.t. ``y_pred``.

    ``eps`` terms are constants and d|x|/dx = sign(x) (0 at x = 0).  The
    result is a raw :class:`Node` gradient program, possibly using the
    internal ``neg``/``sign``/``abs``/``fdiv`` operators.
    """
    if wrt != VAR_PRED:
        raise ValueError("only differentiation w.r.t. y_pred is supported")
    d = _diff(_root(tree))
    return const(0.0) if d is None else d


def _diff(n):
    """Derivative node, or None when identically zero."""
    o = n.op
    if o == VAR_PRED:
        return ONE
    if o in (VAR_REAL, CONST):
        return None
    if len(n.children) == 2:
        a, b = n.children
        da, db = _diff(a), _diff(b)
        if da is None and db is None:
            return None
        if o == "add":
            return _add(da, db)
        if o == "sub":
            return _add(da, _neg(db))
        if o == "mul":
            return _add(None if da is None else _mul(da, b), None if db is None else _mul(a, db))
        if o == "div":
            # d[a/(b+e)] = da/(b+e) - a*db/(b+e)^2, written with the same protected div
            first = None if da is None else op("div", da, b)
            second = None if db is None else _neg(op("div", op("div", _mul(a, db), b), b))
            return _add(first, second)
        if o == "fdiv":
            first = None if da is None else op("fdiv", da, b)
            second = None if db is None else _neg(op("fdiv", op("fdiv", _mul(a, db), b), b))
            return _add(first, second)
        raise AssertionError(o)
    (u,) = n.children
    du = _diff(u)
    if du is None:
        return None
    if o == "sqrt":
        return op("fdiv", _mul(op("sign", u), du), op("mul", const(2.0), n))
    if o == "log":
        # sign(u)*du / (|u| + eps) is exactly protected div by |u|
        return op("div", _mul(op("sign", u), du), op("abs", u))
    if o == "exp":
        return _mul(n, du)
    if o == "sin":
        return _mul(op("cos", u), du)
    if o == "cos":
        return _neg(_mul(op("sin", u), du))
    if o == "neg":
        return _neg(du)
    if o == "abs":
        return _mul(op("sign", u), du)
    if o == "sign":
        return None
    raise AssertionError(o)


def abs_arguments(tree):
    """Subtrees whose absolute value the protected semantics take (non-smooth points)."""
    out = []
    for n in iter_nodes(_root(tree)):
        if n.op in ("sqrt", "log", "abs", "sign"):
            out.append(n.children[0])
    return out


# ------------------------------------------------------------ serialization

def _fmt(value):
    # repr is the shortest string that round-trips exactly
    return repr(float(value))


def serialize(tree):
    """Prefix s-expression, e.g. ``(add yp 3.985)``."""
    root = _root(tree)
    parts = []

    def walk(n):
        if n.op == CONST:
            parts.append(_fmt(n.value))
        elif n.is_terminal:
            parts.append(n.op)
        else:
            parts.append("(" + n.op)
            for c in n.children:
                parts.append(" ")
                walk(c)
            parts.append(")")

    walk(root)
    return "".join(parts)


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


def _tokenize(text):
    pos = 0
    tokens = []
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastindex)
        tokens.append((m.group(m.lastindex), start + 1))
        pos = m.end()
    if text[pos:].strip():
        raise ParseError("unexpected character", pos + 1)
    return tokens


def parse_node(text):
    """Parse an s-expression into a raw :class:`Node` (no validity gate)."""
    if not text.isascii():
        raise ParseError("non-ASCII input", next(i for i, ch in enumerate(text) if not ch.isascii()) + 1)
    tokens = _tokenize(text)
    end = len(text.encode()) + 1
    if not tokens:
        raise ParseError("empty expression", end)
    idx = 0

    def expr():
        nonlocal idx
        if idx >= len(tokens):
            raise ParseError("unbalanced parenthesis", end)
        tok, at = tokens[idx]
        idx += 1
        if tok == ")":
            raise ParseError("unexpected ')'", at)
        if tok != "(":
            return atom(tok, at)
        if idx >= len(tokens):
            raise ParseError("unbalanced parenthesis", end)
        name, name_at = tokens[idx]
        idx += 1
        if name not in ARITY or ARITY[name] == 0:
            raise ParseError(f"unknown operator {name!r}", name_at)
        kids = []
        while True:
            if idx >= len(tokens):
                raise ParseError("unbalanced parenthesis", end)
            if tokens[idx][0] == ")":
                idx += 1
                break
            kids.append(expr())
        if len(kids) != ARITY[name]:
            raise ParseError(f"{name} takes {ARITY[name]} argument(s), got {len(kids)}", at)
        return Node(name, tuple(kids))

    def atom(tok, at):
        if tok in (VAR_PRED, VAR_REAL):
            return Node(tok)
        if _NUMBER.match(tok):
            return const(float(tok))
        raise ParseError(f"invalid atom {tok!r}", at)

    node = expr()
    if idx != len(tokens):
        raise ParseError("trailing input", tokens[idx][1])
    return node


def parse(text):
    """Parse an s-expression into a validated :class:`ExprTree`."""
    return ExprTree(parse_node(text))


# --------------------------------------------------------------- generation

def _random_terminal(constraints, rng):
    kind = rng.choice(TERMINALS)
    if kind == CONST:
        return const(rng.uniform(constraints.const_low, constraints.const_high))
    return Node(kind)


def _random_operator(rng):
    return rng.choice(OPERATORS)


def grow(height, constraints, rng, full=False, min_height=1):
    """Random tree of height <= ``height`` (exactly ``height`` when ``full``).

    Levels above ``min_height`` are forced to be operators.
    """
    def build(depth):
        if depth == height:
            return _random_terminal(constraints, rng)
        if full or depth < min_height:
            name = _random_operator(rng)
        else:
            n_ops = len(OPERATORS)
            pick = rng.randrange(n_ops + len(TERMINALS))
            if pick >= n_ops:
                return _random_terminal(constraints, rng)
            name = OPERATORS[pick]
        return Node(name, tuple(build(depth + 1) for _ in range(ARITY[name])))

    return build(1)


def _fit_height(constraints):
    # largest height whose full binary tree still fits max_size
    return max(1, int(math.log2(constraints.max_size + 1)))


def random_tree(constraints=GenConstraints(), rng=None):
    """Ramped half-and-half tree, repaired to contain both variables."""
    rng = rng if rng is not None else random.Random()
    hi = max(constraints.min_height, min(constraints.max_init_height, _fit_height(constraints)))
    height = rng.randint(constraints.min_height, hi)
    full = rng.random() < 0.5
    root = grow(height, constraints, rng, full=full, min_height=constraints.min_height)
    return ExprTree(repair(root, constraints, rng))


def repair(root, constraints, rng):
    """Insert missing variables by replacing uniformly chosen terminal leaves.

    Leaves holding the last copy of a required variable are never chosen.
    A tree with a single leaf gets that leaf replaced by a random binary op
    over both variables; if that would break ``max_size`` the whole tree
    becomes one.
    """
    root = _root(root)
    for _ in range(2):
        present = variables(root)
        missing = [v for v in (VAR_PRED, VAR_REAL) if v not in present]
        if not missing:
            return root
        counts = {VAR_PRED: 0, VAR_REAL: 0}
        leaves = []
        for path, n in positions(root):
            if n.is_terminal:
                leaves.append((path, n))
                if n.op in counts:
                    counts[n.op] += 1
        candidates = [(p, n) for p, n in leaves if not (n.op in counts and counts[n.op] == 1)]
        if len(leaves) < 2 or not candidates:
            pair = [YP, YR]
            rng.shuffle(pair)
            bridge = Node(rng.choice(BINARY), tuple(pair))
            if len(leaves) == 1 and root.size + 2 <= constraints.max_size:
                return replace_at(root, leaves[0][0], bridge)
            return bridge
        path, _ = rng.choice(candidates)
        root = replace_at(root, path, Node(missing[0]))
    return root
