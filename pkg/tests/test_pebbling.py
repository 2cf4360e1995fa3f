import math

import pytest
from hypothesis import given, settings, strategies as st

from pebblemark.builders import cr_block_partition, line_graph, random_dag, random_static_spec, sample_fig4
from pebblemark.errors import LegalityError, RangeError, ResolutionError
from pebblemark.graph import Dag, depth, remove
from pebblemark.pebbling import (
    AttackParams,
    PebblingTrace,
    TraceRecorder,
    World,
    attack_cost_bound,
    cc,
    cc_distribution,
    check_legal,
    completes,
    exhaustive_min_cc,
    generic_attack,
    greedy_discard,
    keep_all,
    serialize_trace,
    strategy_suite,
    valiant_reduce,
    violations,
)


def test_l3_example_trace():
    g = line_graph(3)
    t = PebblingTrace.from_sets(g, [{1}, {1, 2}, {2, 3}], mode="sequential")
    assert check_legal(t, sliding=False) and cc(t).cc == 5
    assert completes(t)


def test_sliding_only_trace():
    g = line_graph(3)
    t = PebblingTrace.from_sets(g, [{1}, {2}, {3}], mode="sequential")
    assert check_legal(t, sliding=True)
    assert not check_legal(t, sliding=False)
    assert cc(t).cc == 3


def test_missing_parent_is_illegal():
    t = PebblingTrace.from_sets(line_graph(3), [{1}, {1, 3}])
    with pytest.raises(LegalityError, match="node 3"):
        cc(t)


def test_two_pebbles_in_sequential_round():
    g = Dag(3, ((), (), ()), 0)
    t = PebblingTrace.from_sets(g, [{1, 2}], mode="sequential")
    assert any("sequential" in m for m in violations(t))
    assert check_legal(PebblingTrace.from_sets(g, [{1, 2}], mode="parallel"))


def test_reveal_timing():
    spec, _ = cr_block_partition(line_graph(16), 4, 2)
    w = World(spec)
    with pytest.raises(ResolutionError):
        w.parents(18)
    rec = TraceRecorder(w, "sequential")
    for v in range(1, 17):
        rec.step(add=[v])
    assert w.revealed_upto == 17 and rec.reveals[17] == 16
    rec.step(add=[17])
    assert rec.reveals[18] == 17
    assert check_legal(rec.trace())


def test_early_placement_is_flagged():
    spec, _ = cr_block_partition(line_graph(4), 2, 1)
    w = World(spec)
    rec = TraceRecorder(w, "parallel")
    for v in range(1, 5):
        rec.step(add=range(1, v + 1))
    t = rec.trace()
    assert t.parents[4] is not None
    # node 5 placed in the same round as its predecessor
    bad = PebblingTrace(t.n, "parallel", [((1, 2, 3), ()), ((4, 5), ())], [3, 5], ["", ""], t.parents, {5: 2}, 4)
    assert any("revealed" in m for m in violations(bad))


def test_trace_concat_is_additive():
    g = line_graph(4)
    a = PebblingTrace.from_sets(g, [{1}, {1, 2}])
    b = PebblingTrace.from_sets(g, [{2, 3}, {3, 4}])
    ab = a.concat(b)
    assert cc(ab, check=False).cc == cc(a, check=False).cc + cc(b, check=False).cc
    assert check_legal(ab, sliding=False)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_exhaustive_line_graph(n):
    g = line_graph(n)
    assert exhaustive_min_cc(g, sliding=False) == 2 * n - 1
    assert exhaustive_min_cc(g, sliding=True) == n
    assert cc(greedy_discard(World(g)), sliding=False).cc == exhaustive_min_cc(g, sliding=False)


def test_exhaustive_parallel_not_worse():
    g = random_dag(7, 2, seed=4)
    assert exhaustive_min_cc(g, sequential=False) <= exhaustive_min_cc(g)


def test_exhaustive_limit():
    with pytest.raises(RangeError):
        exhaustive_min_cc(line_graph(13))


@given(st.integers(2, 8), st.integers(0, 2**16))
@settings(max_examples=25, deadline=None)
def test_greedy_never_beats_optimum(n, seed):
    g = random_dag(n, 2, seed)
    opt = exhaustive_min_cc(g, sliding=False)
    assert cc(greedy_discard(World(g)), sliding=False).cc >= opt


def test_keep_all_cost():
    assert cc(keep_all(World(line_graph(10)))).cc == 55


def test_greedy_on_dynamic_spec_is_legal():
    spec = random_static_spec(200, seed=1)
    t = greedy_discard(World(spec))
    assert check_legal(t, sliding=False) and completes(t)


# -- depth reduction --------------------------------------------------------------------


def _longest(g, gone):
    best = [0] * (g.n + 1)
    for v in range(1, g.n + 1):
        if v not in gone:
            best[v] = 1 + max((best[u] for u in g.parents[v - 1] if u not in gone), default=0)
    return max(best)


@pytest.mark.parametrize("n", [64, 256])
@pytest.mark.parametrize("eta", [1, 2, 3])
def test_valiant_bounds(n, eta):
    for seed in range(5):
        g = random_dag(n, 3, seed)
        s = valiant_reduce(g, eta)
        assert len(s) <= math.ceil(eta * 3 * n / (math.log2(n) - eta))
        assert _longest(g, s) <= math.ceil(n / 2**eta)
        assert depth(remove(g, s)[0]) == _longest(g, s)


def test_valiant_non_power_of_two():
    g = random_dag(100, 3, 1)
    for eta in (1, 2, 3):
        assert _longest(g, valiant_reduce(g, eta)) <= 2 ** (7 - eta)


def test_valiant_eta_range():
    with pytest.raises(RangeError):
        valiant_reduce(line_graph(8), 4)


# -- the generic attack -------------------------------------------------------------------


def test_attack_params_validate():
    with pytest.raises(RangeError):
        AttackParams(16, 1, 2, 4, 4)
    p = AttackParams(1024, 4, 3, 2, 64)
    assert p.d == 256 and p.e == math.ceil(2 * 3 * 1024 / 8)


def test_generic_attack_on_static_spec():
    spec = random_static_spec(512, seed=3)
    p = AttackParams.balanced(512, 1, 2, 3)
    trace, rep = generic_attack(World(spec), p)
    assert check_legal(trace) and completes(trace)
    assert rep.cc <= 4 * attack_cost_bound(512, 1, 2, 3, p.g)
    assert rep.fallbacks == 0
    assert rep.cc < cc(keep_all(World(spec))).cc


def test_generic_attack_on_fig4():
    c = sample_fig4(16, 0.5, 4, seed=2)
    spec = c.spec
    p = AttackParams.balanced(spec.n, spec.k, spec.indeg_bound, 2)
    trace, rep = generic_attack(World(spec, x=b"in"), p)
    assert check_legal(trace) and completes(trace)
    assert rep.cc <= 4 * attack_cost_bound(spec.n, spec.k, spec.indeg_bound, 2, p.g)


def test_suite_and_distribution():
    spec = random_static_spec(64, seed=1)
    res = strategy_suite(spec)
    assert res["greedy_discard"].cc <= res["keep_all"].cc
    q = cc_distribution(cr_block_partition(line_graph(32), 8, 2)[0], "greedy_discard", 5, 0.2, seed=1)
    assert q.value == sorted(q.samples)[3]


def test_trace_serialization():
    t = PebblingTrace.from_sets(line_graph(2), [{1}, {2}])
    assert serialize_trace(t) == "pebbling v1 2 parallel 2\n+1 -\n+2 -1\n"
