"""Tree-based GP for loss search: variation operators, selection, archive, main loop."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as E

WORST_FITNESS = 1e18


@dataclass(frozen=True)
class FitnessRecord:
    """Summary of repeated trainings; ``scalar`` is what selection minimizes."""

    mean_fd: float
    std_fd: float
    per_run: tuple = ()  # (fd, discriminator_accuracy or None)
    scalar: float = 0.0
    degenerate: bool = False

    @classmethod
    def from_runs(cls, per_run, degenerate=False, std_weight=1.0):
        fds = np.array([fd for fd, _ in per_run], dtype=float)
        degenerate = degenerate or not np.all(np.isfinite(fds))
        if degenerate:
            fds = np.where(np.isfinite(fds), fds, WORST_FITNESS)
        mean, std = float(fds.mean()), float(fds.std())
        scalar = WORST_FITNESS if degenerate else aggregate(mean, std, std_weight)
        return cls(mean, std, tuple((float(f), a) for f, a in zip(fds, (a for _, a in per_run))), scalar, degenerate)

    @classmethod
    def worst(cls):
        return cls(WORST_FITNESS, 0.0, (), WORST_FITNESS, True)

    def to_dict(self):
        return {
            "mean_fd": self.mean_fd,
            "std_fd": self.std_fd,
            "scalar": self.scalar,
            "degenerate": self.degenerate,
            "per_run": [{"fd": fd, "disc_accuracy": acc} for fd, acc in self.per_run],
        }

    @classmethod
    def from_dict(cls, d):
        runs = tuple((r["fd"], r["disc_accuracy"]) for r in d.get("per_run", ()))
        return cls(d["mean_fd"], d["std_fd"], runs, d["scalar"], d.get("degenerate", False))


def aggregate(mean, std, std_weight=1.0):
    """Scalar fitness: mean plus a stability penalty."""
    value = mean + std_weight * std
    return value if math.isfinite(value) else WORST_FITNESS


@dataclass(frozen=True)
class Individual:
    tree: E.ExprTree
    fitness: FitnessRecord | None = None
    birth_generation: int = 0

    @property
    def scalar(self):
        return WORST_FITNESS if self.fitness is None else self.fitness.scalar

    @property
    def size(self):
        return self.tree.size

    def with_fitness(self, fitness):
        return replace(self, fitness=fitness)


# Table of the eight GP settings: (M_ST, M_N, p_A, Cr_A, selection, k_t)
TABLE_B = {
    1: (0.3, 0.0, 0.0, 0.0, "tournament", 3),
    2: (0.3, 0.0, 0.5, 0.5, "tournament", 3),
    3: (0.3, 0.0, 0.0, 0.0, "select_n_best", None),
    4: (0.3, 0.0, 0.5, 0.5, "select_n_best", None),
    5: (0.2, 0.1, 0.0, 0.0, "tournament", 3),
    6: (0.2, 0.1, 0.5, 0.5, "tournament", 3),
    7: (0.2, 0.1, 0.0, 0.0, "select_n_best", None),
    8: (0.2, 0.1, 0.5, 0.5, "select_n_best", None),
}
SELECTIONS = ("tournament", "select_n_best")


@dataclass(frozen=True)
class GpConfig:
    n: int = 10
    T: int = 50
    Cr: float = 0.7
    M_ST: float = 0.3
    M_N: float = 0.0
    p_A: float = 0.0
    Cr_A: float = 0.0
    selection: str = "tournament"
    k_t: int = 3
    constraints: E.GenConstraints = field(default_factory=E.GenConstraints)
    fitness_runs: int = 5
    seed: int = 0
    std_weight: float = 1.0
    mutation_max_height: int = 4
    name: str = "custom"

    def __post_init__(self):
        for rate in ("Cr", "M_ST", "M_N", "p_A", "Cr_A"):
            v = getattr(self, rate)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{rate} must lie in [0, 1], got {v}")
        if self.n < 2:
            raise ValueError("population size n must be >= 2")
        if self.T < 1:
            raise ValueError("generations T must be >= 1")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        if self.selection == "tournament" and not 1 <= self.k_t:
            raise ValueError("tournament size k_t must be >= 1")
        if self.fitness_runs < 1:
            raise ValueError("fitness_runs must be >= 1")

    @property
    def n_A(self):
        return self.n

    @classmethod
    def from_table(cls, config_id, **overrides):
        """Build Table B row ``config_id`` (1-8); globals n=10, T=50, Cr=0.7."""
        if isinstance(config_id, str):
            config_id = config_id.removeprefix("config-")
        try:
            m_st, m_n, p_a, cr_a, selection, k_t = TABLE_B[int(config_id)]
        except (KeyError, ValueError):
            raise ValueError(f"unknown GP config {config_id!r}; valid ids are 1-8") from None
        base = dict(M_ST=m_st, M_N=m_n, p_A=p_a, Cr_A=cr_a, selection=selection,
                    k_t=k_t or 3, name=f"config-{int(config_id)}")
        base.update(overrides)
        return cls(**base)


# ------------------------------------------------------------ variation ops

def _child(root, parent, constraints, rng, generation):
    if root.size > constraints.max_size:
        return Individual(parent.tree, None, generation)
    root = E.repair(root, constraints, rng)
    if root.size > constraints.max_size:
        return Individual(parent.tree, None, generation)
    return Individual(E.ExprTree(root), None, generation)


def crossover(a, b, constraints, rng, generation=0):
    """Swap a uniformly chosen subtree of ``a`` with one of ``b``.

    An oversized child is replaced by a copy of its own parent; a child
    missing a variable gets the leaf repair.
    """
    pa, na = rng.choice(E.positions(a.tree.root))
    pb, nb = rng.choice(E.positions(b.tree.root))
    ca = E.replace_at(a.tree.root, pa, nb)
    cb = E.replace_at(b.tree.root, pb, na)
    return _child(ca, a, constraints, rng, generation), _child(cb, b, constraints, rng, generation)


def mutate_subtree(ind, constraints, rng, max_height=4, generation=None, attempts=10):
    """Replace a uniformly chosen subtree by a fresh grown tree of height <= ``max_height``."""
    generation = ind.birth_generation if generation is None else generation
    root = ind.tree.root
    for _ in range(attempts):
        path, _ = rng.choice(E.positions(root))
        fresh = E.grow(rng.randint(1, max_height), constraints, rng)
        new = E.replace_at(root, path, fresh)
        if new.size <= constraints.max_size:
            new = E.repair(new, constraints, rng)
            if new.size <= constraints.max_size:
                return Individual(E.ExprTree(new), None, generation)
    return Individual(ind.tree, ind.fitness, generation)


def _random_like(node, constraints, rng):
    if node.op in E.BINARY:
        return E.Node(rng.choice([o for o in E.BINARY if o != node.op]), node.children)
    if node.op in E.UNARY:
        return E.Node(rng.choice([o for o in E.UNARY if o != node.op]), node.children)
    kinds = [t for t in E.TERMINALS if t != node.op or t == E.CONST]
    kind = rng.choice(kinds)
    if kind == E.CONST:
        return E.const(rng.uniform(constraints.const_low, constraints.const_high))
    return E.Node(kind)


def mutate_node(ind, constraints, rng, generation=None):
    """Replace a uniformly chosen node by a different random node of the same arity."""
    generation = ind.birth_generation if generation is None else generation
    root = ind.tree.root
    path, node = rng.choice(E.positions(root))
    new = E.replace_at(root, path, _random_like(node, constraints, rng))
    return _child(new, ind, constraints, rng, generation)


# ---------------------------------------------------------------- selection

def _rank_key(pool, i):
    ind = pool[i]
    return (ind.scalar, ind.size, ind.birth_generation, i)


def select_indices(pool, config, rng):
    """Indices of the ``config.n`` survivors (may repeat under tournament)."""
    n = config.n
    if len(pool) < n:
        raise ValueError("selection pool smaller than population size")
    if any(ind.fitness is None for ind in pool):
        raise ValueError("all individuals must be evaluated before selection")
    if config.selection == "select_n_best":
        return sorted(range(len(pool)), key=lambda i: _rank_key(pool, i))[:n]
    k = min(config.k_t, len(pool))
    winners = []
    for _ in range(n):
        entrants = rng.sample(range(len(pool)), k)
        winners.append(min(entrants, key=lambda i: _rank_key(pool, i)))
    return winners


def select(pool, config, rng):
    return [pool[i] for i in select_indices(pool, config, rng)]


# ------------------------------------------------------------------ archive

@dataclass
class Archive:
    capacity: int
    p_A: float = 0.0
    Cr_A: float = 0.0
    members: list = field(default_factory=list)

    def __len__(self):
        return len(self.members)


def archive_step(losers, archive, rng):
    """Admit each loser with probability ``p_A``; when full, overwrite a random member."""
    if archive.p_A <= 0:
        return archive
    for ind in losers:
        if rng.random() < archive.p_A:
            if len(archive.members) < archive.capacity:
                archive.members.append(ind)
            else:
                archive.members[rng.randrange(archive.capacity)] = ind
    return archive


# -------------------------------------------------------------------- loop

@dataclass
class GenerationRecord:
    generation: int
    best_scalar: float
    mean_scalar: float
    best_expr: str
    archive_size: int
    evaluations: int

    def to_dict(self):
        return {
            "generation": self.generation,
            "best_scalar": self.best_scalar,
            "mean_scalar": self.mean_scalar,
            "best_expr": self.best_expr,
            "archive_size": self.archive_size,
            "evaluations": self.evaluations,
        }


@dataclass
class SearchResult:
    best: Individual
    history: list
    population: list
    archive: Archive
    initial: GenerationRecord | None = None
    evaluations: int = 0


class _Evaluator:
    """Per-run fitness cache in front of the user evaluator."""

    def __init__(self, fn, seed, map_fn=map):
        self.fn = fn
        self.seed = seed
        self.map_fn = map_fn
        self.cache = {}
        self.calls = 0

    def _one(self, tree):
        try:
            rec = self.fn(tree, self.seed)
        except Exception:  # noqa: BLE001 - a failing candidate must not stop the search
            return FitnessRecord.worst()
        if rec is None or not math.isfinite(rec.scalar):
            return FitnessRecord.worst()
        return rec

    def __call__(self, individuals):
        todo = []
        for ind in individuals:
            if ind.fitness is None and ind.tree.root not in self.cache and ind.tree.root not in todo:
                todo.append(ind.tree.root)
        results = list(self.map_fn(self._one, [E.ExprTree(r) for r in todo]))
        for root, rec in zip(todo, results):
            self.cache[root] = rec
        self.calls += len(todo)
        return [ind if ind.fitness is not None else ind.with_fitness(self.cache[ind.tree.root])
                for ind in individuals]


def _best(individuals):
    return min(range(len(individuals)), key=lambda i: _rank_key(individuals, i))


def _record(generation, population, best, archive, evaluations):
    scalars = [ind.scalar for ind in population]
    return GenerationRecord(
        generation, best.scalar, float(np.mean(scalars)), E.serialize(best.tree), len(archive), evaluations,
    )


def run_gp(config, evaluator, on_generation=None, map_fn=map, resume=None):
    """Run the GP loop and return the best-ever individual with per-generation history.

    ``evaluator(tree, seed) -> FitnessRecord`` must be deterministic; it is
    called with ``config.seed`` and at most once per distinct tree.
    ``on_generation(record, state)`` is called after every generation with a
    checkpoint dict (see :func:`checkpoint_state`).  ``resume`` continues
    from such a checkpoint.
    """
    rng = random.Random(config.seed)
    cons = config.constraints
    ev = _Evaluator(evaluator, config.seed, map_fn)
    archive = Archive(config.n_A, config.p_A, config.Cr_A)
    history = []

    if resume is None:
        population = [Individual(E.random_tree(cons, rng), None, 0) for _ in range(config.n)]
        population = ev(population)
        best = population[_best(population)]
        initial = _record(0, population, best, archive, ev.calls)
        start = 1
    else:
        population, archive, best, history, initial, start = _restore(resume, config, rng, ev)

    for g in range(start, config.T + 1):
        order = list(range(len(population)))
        rng.shuffle(order)
        offspring = []
        for j in range(0, len(order) - 1, 2):
            a, b = population[order[j]], population[order[j + 1]]
            if rng.random() < config.Cr:
                if archive.members and rng.random() < config.Cr_A:
                    b = rng.choice(archive.members)
                offspring.extend(crossover(a, b, cons, rng, g))
            else:
                offspring.extend((Individual(a.tree, a.fitness, a.birth_generation),
                                  Individual(b.tree, b.fitness, b.birth_generation)))
        varied = []
        for child in offspring:
            changed = child.fitness is None
            if rng.random() < config.M_ST:
                child = mutate_subtree(child, cons, rng, config.mutation_max_height, g)
                changed = True
            if rng.random() < config.M_N:
                child = mutate_node(child, cons, rng, g)
                changed = True
            if changed:
                varied.append(Individual(child.tree, None, g))
        varied = ev(varied)

        pool = population + varied
        keep = select_indices(pool, config, rng)
        kept = set(keep)
        losers = [pool[i] for i in range(len(pool)) if i not in kept]
        population = [pool[i] for i in keep]
        archive_step(losers, archive, rng)

        gen_best = population[_best(population)]
        candidates = [best, *varied, gen_best]
        best = candidates[_best(candidates)]
        rec = _record(g, population, best, archive, ev.calls)
        history.append(rec)
        if on_generation is not None:
            on_generation(rec, checkpoint_state(config, g, population, archive, best, history, initial, rng))

    return SearchResult(best, history, population, archive, initial, ev.calls)


# -------------------------------------------------------------- checkpoints

def _ind_to_dict(ind):
    return {
        "expr": E.serialize(ind.tree),
        "birth_generation": ind.birth_generation,
        "fitness": None if ind.fitness is None else ind.fitness.to_dict(),
    }


def _ind_from_dict(d):
    fit = None if d["fitness"] is None else FitnessRecord.from_dict(d["fitness"])
    return Individual(E.parse(d["expr"]), fit, d["birth_generation"])


def checkpoint_state(config, generation, population, archive, best, history, initial, rng):
    state = rng.getstate()
    return {
        "config": config.name,
        "seed": config.seed,
        "generation": generation,
        "population": [_ind_to_dict(i) for i in population],
        "archive": [_ind_to_dict(i) for i in archive.members],
        "best": _ind_to_dict(best),
        "history": [r.to_dict() for r in history],
        "initial": None if initial is None else initial.to_dict(),
        "rng_state": [state[0], list(state[1]), state[2]],
    }


def _restore(state, config, rng, ev):
    v, internal, gauss = state["rng_state"]
    rng.setstate((v, tuple(internal), gauss))
    population = [_ind_from_dict(d) for d in state["population"]]
    archive = Archive(config.n_A, config.p_A, config.Cr_A, [_ind_from_dict(d) for d in state["archive"]])
    for ind in population + archive.members:
        if ind.fitness is not None:
            ev.cache[ind.tree.root] = ind.fitness
    best = _ind_from_dict(state["best"])
    history = [GenerationRecord(**r) for r in state["history"]]
    initial = None if state.get("initial") is None else GenerationRecord(**state["initial"])
    return population, archive, best, history, initial, state["generation"] + 1


def save_checkpoint(path, state):
    with open(path, "w") as fh:
        json.dump(state, fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        return json.load(fh)


# ------------------------------------------------------------ proxy fitness

class ProxyFitness:
    """Mean squared deviation from a target expression on a ``grid``-point y_pred grid, y_real in {0, 1}.

    A cheap stand-in for GAN training, used to exercise the search loop.
    """

    def __init__(self, target, grid=21, eps=E.DEFAULT_EPS):
        self.target = target if isinstance(target, E.ExprTree) else E.parse(target)
        p = np.linspace(0.0, 1.0, grid)
        self.y_pred = np.concatenate([p, p])
        self.y_real = np.concatenate([np.zeros(grid), np.ones(grid)])
        self.eps = eps
        self.expected = E.evaluate(self.target, self.y_pred, self.y_real, eps)

    def __call__(self, tree, seed=0):
        got = E.evaluate(tree, self.y_pred, self.y_real, self.eps)
        got = np.broadcast_to(got, self.expected.shape)
        with np.errstate(all="ignore"):
            mse = float(np.mean((got - self.expected) ** 2))
        if not math.isfinite(mse):
            return FitnessRecord.worst()
        return FitnessRecord(mse, 0.0, ((mse, None),), mse)

