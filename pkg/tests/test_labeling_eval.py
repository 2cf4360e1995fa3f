import hashlib
import random

import pytest

from pebblemark.builders import block_partition, cr_block_partition, line_graph, sample_fig5
from pebblemark.errors import ConfigurationError, ContractError, ParseError, RangeError
from pebblemark.evaluator import (
    derive_coins,
    evaluate,
    evaluate_hybrid,
    format_vector,
    graph_hash,
    parse_vector,
    required_capacity,
)
from pebblemark.graph import Dag
from pebblemark.labeling import Oracle, label, labels, output, spec_output
from pebblemark.memory import TieredMemory

H = Oracle(b"\x01" * 32)


def _direct(v, payload, oracle=H):
    h = hashlib.blake2b(v.to_bytes(8, "big"), key=oracle.seed, digest_size=oracle.nbytes)
    h.update(payload)
    return h.digest()


def test_source_label():
    g = Dag(1, ((),), 0)
    assert label(g, H, b"pw", 1) == _direct(1, b"pw")


def test_line3_unrolled():
    x = b"salt+pw"
    want = _direct(3, _direct(2, _direct(1, x)))
    assert label(line_graph(3), H, x, 3) == want
    assert output(line_graph(3), H, x) == want


def test_isolated_sources_output():
    g = Dag(2, ((), ()), 0)
    assert output(g, H, b"x") == _direct(1, b"x") + _direct(2, b"x")


def test_labels_are_deterministic_and_seed_dependent():
    g = line_graph(10)
    assert labels(g, H, b"x") == labels(g, H, b"x")
    assert labels(g, Oracle(b"\x02" * 32), b"x") != labels(g, H, b"x")


def test_oracle_width():
    assert len(Oracle(width=128)(1, b"")) == 16
    with pytest.raises(RangeError):
        Oracle(width=100)


def _walk_output(spec, oracle, x):
    """Independent recomputation of the walk-resolved output."""
    base = spec.base
    lab = {}
    for v in range(1, base.n + 1):
        ps = base.parents[v - 1]
        lab[v] = _direct(v, b"".join(lab[u] for u in ps) if ps else x, oracle)
    unused, used_count, parents = {}, {}, {}
    for i in range(base.n + 1, spec.n + 1):
        blk = spec.potential[i - base.n - 1]
        u = unused.setdefault(blk, list(range(len(blk))))
        s = used_count.get(blk, 0)
        width = len(blk) - s
        m = int.from_bytes(lab[i - 1], "big") % width
        pos = u[m]
        u[m], u[width - 1] = u[width - 1], u[m]
        used_count[blk] = s + 1
        r = blk[pos]
        parents[i] = r
        lab[i] = _direct(i, lab[i - 1] if r == i - 1 else lab[r] + lab[i - 1], oracle)
    has_child = set()
    for v in range(1, base.n + 1):
        has_child.update(base.parents[v - 1])
    for i, r in parents.items():
        has_child.update((r, i - 1))
    return b"".join(lab[v] for v in range(1, spec.n + 1) if v not in has_child)


@pytest.fixture(scope="module")
def fig5():
    return sample_fig5(16, 0.5, 4, seed=3).spec


def _mem(spec, policy="lru", extra=0):
    return TieredMemory(required_capacity(spec) + extra, policy)


def test_spec_output_matches_independent_walk(fig5):
    for x in (b"", b"a", b"password"):
        assert spec_output(fig5, H, x) == _walk_output(fig5, H, x)


def test_fig5_64_output_matches_independent_walk():
    spec = sample_fig5(64, 0.5, 8, seed=0).spec
    x = b"input"
    assert evaluate(spec, H, x, b"c1", _mem(spec)).output == _walk_output(spec, H, x)


@pytest.mark.parametrize("policy", ["lru", "fifo"])
def test_output_independent_of_coins(fig5, policy):
    outs = {evaluate(fig5, H, b"x", bytes([c]), _mem(fig5, policy)).output for c in range(20)}
    assert outs == {spec_output(fig5, H, b"x")}


def test_hybrid_and_ablation_keep_output(fig5):
    want = spec_output(fig5, H, b"x")
    assert evaluate_hybrid(fig5, H, b"x", b"k", _mem(fig5)).output == want
    assert evaluate(fig5, H, b"x", b"k", _mem(fig5), "identity").output == want


def test_shuffle_round_is_silent(fig5):
    for c in range(10):
        res = evaluate(fig5, H, b"x", bytes([c]), _mem(fig5))
        assert res.phase_rounds("shuffle") and res.phase_events("shuffle") == []


def test_flush_identical_across_keys(fig5):
    flushes = {tuple(evaluate(fig5, H, b"x", bytes([c]), _mem(fig5)).phase_events("shuffle_flush")) for c in range(10)}
    assert len(flushes) == 1
    (f,) = flushes
    addrs = [e.address for e in f]
    assert all(e.kind == "S" for e in f)
    # ascending within each block flush round
    by_round = {}
    for e in f:
        by_round.setdefault(e.round, []).append(e.address)
    assert all(a == sorted(a) for a in by_round.values())
    assert len(addrs) == len(set(addrs))


def test_parents_unique_per_block():
    spec = sample_fig5(16, 0.5, 4, seed=1).spec
    rng = random.Random(0)
    for _ in range(100):
        res = evaluate(spec, H, rng.randbytes(8), b"k", _mem(spec))
        picks = {}
        for i, r in zip(spec.dynamic_range, res.parents):
            picks.setdefault(spec.group_of(i)[0], []).append(r)
        assert all(len(p) == len(set(p)) for p in picks.values())


def test_walk_requests_no_address_twice_per_block(fig5):
    res = evaluate(fig5, H, b"x", b"k", _mem(fig5))
    walk = res.phase_events("walk")
    blocks = {b for b in fig5.potential}
    for blk in blocks:
        hits = [e.address for e in walk if e.kind == "R" and e.address in blk]
        assert len(hits) == len(set(hits))


def test_replay_is_identical(fig5):
    a = evaluate(fig5, H, b"x", b"k", _mem(fig5))
    b = evaluate(fig5, H, b"x", b"k", _mem(fig5))
    assert a.leakage.serialize() == b.leakage.serialize()


def test_refuses_small_cache(fig5):
    with pytest.raises(ConfigurationError):
        evaluate(fig5, H, b"x", b"k", TieredMemory(required_capacity(fig5) - 1))


def test_refuses_uniform_partition():
    spec, _ = block_partition(line_graph(32), 8, 2, seed=1)
    with pytest.raises(ContractError):
        evaluate(spec, H, b"x", b"k", TieredMemory(64))


def test_refuses_perm_rule():
    spec, _ = cr_block_partition(line_graph(32), 8, 2, rule="perm")
    with pytest.raises(ContractError):
        evaluate(spec, H, b"x", b"k", TieredMemory(64))


def test_unknown_permutation(fig5):
    with pytest.raises(ConfigurationError):
        evaluate(fig5, H, b"x", b"k", _mem(fig5), permutation="bogus")


def test_vector_round_trip(fig5):
    out = spec_output(fig5, H, b"x")
    line = format_vector(fig5, b"x", b"\x00\x01", out)
    assert parse_vector(line) == (graph_hash(fig5), b"x", b"\x00\x01", out)
    with pytest.raises(ParseError):
        parse_vector("vector v1 ab zz 00 00")


def test_derive_coins_length():
    assert len(derive_coins(b"s", 1, 2)) == 16 and derive_coins(b"s", 1) != derive_coins(b"s", 2)
