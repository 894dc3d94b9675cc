import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lossforge import expr as E
from lossforge.genetics import (
    WORST_FITNESS,
    Archive,
    FitnessRecord,
    GpConfig,
    Individual,
    ProxyFitness,
    archive_step,
    crossover,
    load_checkpoint,
    mutate_node,
    mutate_subtree,
    run_gp,
    save_checkpoint,
    select,
    select_indices,
)

CONS = E.GenConstraints()
TARGET = "(mul (sub yr yp) (sub yr yp))"


def ind(text, scalar=None, gen=0):
    fit = None if scalar is None else FitnessRecord(scalar, 0.0, (), scalar)
    return Individual(E.parse(text), fit, gen)


def big_tree(rng, size=99):
    root = E.op("add", E.YP, E.YR)
    while root.size + 2 <= size:
        root = E.op("add", root, E.const(round(rng.uniform(-5, 5), 3)))
        if root.size + 2 <= size:
            root = E.op("mul", root, E.YP)
    return root


def test_fitness_record_aggregate():
    rec = FitnessRecord.from_runs([(1.0, 0.5), (3.0, 0.7)])
    assert rec.mean_fd == 2.0 and rec.std_fd == 1.0 and rec.scalar == 3.0
    assert FitnessRecord.from_runs([(2.0, 0.5)]).std_fd == 0.0
    assert FitnessRecord.from_runs([(1.0, 0.5), (float("nan"), None)]).scalar == WORST_FITNESS


def test_fitness_record_roundtrip():
    rec = FitnessRecord.from_runs([(0.25, 0.5), (0.5, 0.75)])
    assert FitnessRecord.from_dict(rec.to_dict()) == rec


def test_table_b_rows():
    c4 = GpConfig.from_table("config-4")
    assert (c4.M_ST, c4.M_N, c4.p_A, c4.Cr_A, c4.selection) == (0.3, 0.0, 0.5, 0.5, "select_n_best")
    assert (c4.n, c4.T, c4.Cr) == (10, 50, 0.7)
    c5 = GpConfig.from_table(5)
    assert (c5.M_ST, c5.M_N, c5.selection, c5.k_t) == (0.2, 0.1, "tournament", 3)
    for bad in (0, 9, "x"):
        with pytest.raises(ValueError, match="1-8"):
            GpConfig.from_table(bad)


def test_config_validation():
    with pytest.raises(ValueError):
        GpConfig(Cr=1.5)
    with pytest.raises(ValueError):
        GpConfig(selection="roulette")


def test_crossover_keeps_variables():
    rng = random.Random(0)
    a, b = ind("(add yp yr)"), ind("(mul yp yr)")
    for _ in range(100):
        for child in crossover(a, b, CONS, rng):
            assert E.variables(child.tree.root) == {"yp", "yr"}
            assert child.fitness is None


def test_oversized_child_falls_back_to_parent():
    rng = random.Random(1)
    a = Individual(E.ExprTree(big_tree(rng)))
    b = Individual(E.ExprTree(big_tree(rng)))
    for _ in range(50):
        ca, cb = crossover(a, b, CONS, rng)
        assert ca.size <= 100 and cb.size <= 100


def test_crossover_deterministic():
    a, b = ind("(add (sin yp) yr)"), ind("(mul yp (log yr))")
    assert crossover(a, b, CONS, random.Random(3)) == crossover(a, b, CONS, random.Random(3))


def test_mutate_node_root():
    rng = random.Random(2)
    seen = set()
    for _ in range(100):
        child = mutate_node(ind("(add yp yr)"), CONS, rng)
        root = child.tree.root
        if root.op != "add":
            assert root.op in {"sub", "mul", "div"}
        seen.add(root.op)
    assert {"sub", "mul", "div"} <= seen


def test_mutate_node_keeps_variables():
    rng = random.Random(4)
    for _ in range(200):
        child = mutate_node(ind("(add 1.5 (mul yp yr))"), CONS, rng)
        assert E.variables(child.tree.root) == {"yp", "yr"}


@given(st.integers(0, 10_000))
@settings(max_examples=40)
def test_mutate_subtree_valid(seed):
    rng = random.Random(seed)
    parent = Individual(E.random_tree(CONS, rng))
    child = mutate_subtree(parent, CONS, rng)
    E.validate(child.tree, CONS)


def test_select_n_best():
    pool = [ind("(add yp yr)", s) for s in (3.0, 1.0, 2.0, 5.0)]
    cfg = GpConfig(n=2, selection="select_n_best")
    assert [p.scalar for p in select(pool, cfg, random.Random(0))] == [1.0, 2.0]


def test_tie_break_prefers_smaller():
    small = ind("(add yp yr)", 1.0)
    big = Individual(E.ExprTree(big_tree(random.Random(0), 50)), small.fitness)
    cfg = GpConfig(n=2, selection="select_n_best")
    assert select([big, small], cfg, random.Random(0))[0] is small
    tcfg = GpConfig(n=2, selection="tournament", k_t=2)
    assert all(w is small for w in select([big, small], tcfg, random.Random(0)))


def test_tournament_best_wins_when_drawn():
    pool = [ind("(add yp yr)", s) for s in (0.5, 2.0, 3.0, 4.0, 5.0)]

    class Fixed(random.Random):
        def sample(self, population, k):
            return [3, 0, 4]

    assert select_indices(pool, GpConfig(n=2, k_t=3), Fixed()) == [0, 0]


def test_archive_edges():
    rng = random.Random(0)
    losers = [ind("(add yp yr)", s) for s in (1, 2, 3)]
    a = Archive(10, p_A=0.0)
    archive_step(losers, a, rng)
    assert len(a) == 0
    a = Archive(10, p_A=1.0)
    archive_step(losers, a, rng)
    assert a.members == losers
    full = Archive(3, p_A=1.0, members=list(losers))
    new = ind("(mul yp yr)", 9)
    archive_step([new], full, rng)
    assert len(full) == 3 and new in full.members


def _proxy_cfg(**kw):
    base = dict(T=10, seed=0)
    base.update(kw)
    return GpConfig.from_table(4, **base)


def test_run_gp_invariants():
    proxy = ProxyFitness(TARGET)
    seen = []
    res = run_gp(_proxy_cfg(T=15), proxy, on_generation=lambda rec, st: seen.append(st))
    assert len(res.history) == 15
    bests = [r.best_scalar for r in res.history]
    assert all(b <= a for a, b in zip(bests, bests[1:]))
    assert bests[0] <= res.initial.best_scalar
    for state in seen:
        assert len(state["population"]) == 10
        assert len(state["archive"]) <= 10
        for d in state["population"]:
            E.validate(E.parse(d["expr"]), CONS)


@pytest.mark.parametrize("config_id", range(1, 9))
def test_every_table_row_runs(config_id):
    res = run_gp(GpConfig.from_table(config_id, T=3), ProxyFitness(TARGET))
    assert len(res.population) == 10 and len(res.history) == 3


def test_determinism():
    a = run_gp(_proxy_cfg(seed=5), ProxyFitness(TARGET))
    b = run_gp(_proxy_cfg(seed=5), ProxyFitness(TARGET))
    assert [r.to_dict() for r in a.history] == [r.to_dict() for r in b.history]
    assert E.serialize(a.best.tree) == E.serialize(b.best.tree)


def test_empty_archive_is_inert():
    # with p_A = 0 nothing is ever archived, so Cr_A has no effect
    a = run_gp(GpConfig(T=8, p_A=0.0, Cr_A=0.0, seed=2), ProxyFitness(TARGET))
    b = run_gp(GpConfig(T=8, p_A=0.0, Cr_A=0.9, seed=2), ProxyFitness(TARGET))
    assert [r.to_dict() for r in a.history] == [r.to_dict() for r in b.history]
    assert all(r.archive_size == 0 for r in a.history)


def test_cache_evaluates_each_tree_once():
    calls = Counter()
    proxy = ProxyFitness(TARGET)

    def counting(tree, seed):
        calls[tree.root] += 1
        return proxy(tree, seed)

    res = run_gp(_proxy_cfg(T=10), counting)
    assert max(calls.values()) == 1
    assert res.evaluations == len(calls)


def test_constant_evaluator():
    flat = FitnessRecord(1.0, 0.0, (), 1.0)
    res = run_gp(GpConfig(T=7), lambda tree, seed: flat)
    assert len(res.history) == 7
    assert all(r.best_scalar == 1.0 for r in res.history)


def test_failing_evaluator_gets_sentinel():
    def boom(tree, seed):
        raise RuntimeError("nope")
    res = run_gp(GpConfig(T=2), boom)
    assert res.best.scalar == WORST_FITNESS


def test_checkpoint_resume_matches_straight_run(tmp_path):
    cfg = _proxy_cfg(T=8, seed=3)
    path = tmp_path / "ck.json"

    def stop_at_4(rec, state):
        if rec.generation == 4:
            save_checkpoint(path, state)

    full = run_gp(cfg, ProxyFitness(TARGET), on_generation=stop_at_4)
    resumed = run_gp(cfg, ProxyFitness(TARGET), resume=load_checkpoint(path))
    strip = lambda hist: [{k: v for k, v in r.to_dict().items() if k != "evaluations"} for r in hist]
    assert strip(resumed.history) == strip(full.history)
    assert E.serialize(resumed.best.tree) == E.serialize(full.best.tree)


def test_proxy_fitness_zero_on_target():
    proxy = ProxyFitness(TARGET)
    assert proxy(E.parse(TARGET)).scalar == 0.0
    assert proxy(E.parse("(add yp yr)")).scalar > 0.1
