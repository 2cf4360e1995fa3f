import math
from collections import Counter

import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from pebblemark.builders import block_partition, cr_block_partition, line_graph
from pebblemark.errors import RangeError, ResolutionError
from pebblemark.labeling import LazyResolution, Oracle
from pebblemark.perm import IdentityPerm, KeyedPerm, LazyRandomPerm
from pebblemark.resolvers import PermResolver, WalkResolver, resolver_from_description


def test_enc_is_bijection_small():
    p = KeyedPerm(b"key", 4)
    for tweak in range(5):
        assert sorted(p.enc(tweak, i) for i in range(1, 5)) == [1, 2, 3, 4]


@given(st.binary(min_size=1, max_size=16), st.integers(1, 64), st.integers(0, 9))
def test_dec_inverts_enc(key, m, tweak):
    p = KeyedPerm(key, m)
    assert all(p.dec(tweak, p.enc(tweak, i)) == i for i in range(1, m + 1))


def test_enc_out_of_range():
    p = KeyedPerm(b"k", 4)
    with pytest.raises(RangeError):
        p.enc(0, 5)
    with pytest.raises(RangeError):
        p.dec(0, 0)


def test_distinct_keys_collide_at_chance_rate():
    # 1000 keys on m=8: pairwise equal permutations should be ~C(1000,2)/8! ~ 12
    tables = Counter(tuple(KeyedPerm(i.to_bytes(4, "big"), 8).enc(0, p) for p in range(1, 9)) for i in range(1000))
    pairs = sum(c * (c - 1) // 2 for c in tables.values())
    expected = math.comb(1000, 2) / math.factorial(8)
    assert pairs <= expected + 6 * math.sqrt(expected)


def test_tweaks_give_different_tables():
    p = KeyedPerm(b"k", 16)
    assert [p.enc(0, i) for i in range(1, 17)] != [p.enc(1, i) for i in range(1, 17)]


@pytest.mark.parametrize("m", [1, 2, 8, 64])
def test_lazy_random_perm_is_bijection(m):
    p = LazyRandomPerm(b"seed", m)
    img = [p.enc(3, i) for i in range(1, m + 1)]
    assert sorted(img) == list(range(1, m + 1))
    assert all(p.dec(3, q) == i for i, q in enumerate(img, start=1))


def test_identity_perm():
    p = IdentityPerm(5)
    assert [p.enc(2, i) for i in range(1, 6)] == [1, 2, 3, 4, 5]


def _resolve_all(spec, x=b"x", key=b""):
    lr = LazyResolution(spec, Oracle(), x, key)
    lr.resolve(spec.n)
    return dict(zip(spec.dynamic_range, lr.r))


def test_block_partition_membership():
    spec, layout = block_partition(line_graph(40), 16, 4, seed=b"s")
    for i, r in _resolve_all(spec).items():
        j = (i - 41) % 4
        assert r in layout.block(j)


def test_block_partition_single_block():
    spec, layout = block_partition(line_graph(20), 8, 8, seed=b"s")
    assert layout.n_blocks == 1
    assert all(spec.potential_parents(i) == tuple(range(13, 21)) for i in spec.dynamic_range)


def test_block_partition_needs_divisibility():
    from pebblemark.errors import ShapeError

    with pytest.raises(ShapeError):
        block_partition(line_graph(20), 8, 3)


def test_uniform_resolver_frequencies():
    spec, layout = block_partition(line_graph(16), 8, 4, seed=b"s")
    counts = Counter()
    for t in range(10_000):
        counts[_resolve_all(spec, key=t.to_bytes(4, "big"))[17]] += 1
    obs = [counts[v] for v in layout.block(0)]
    assert sum(obs) == 10_000
    assert chisquare(obs).pvalue > 0.001


@pytest.mark.parametrize("rule", ["walk", "perm"])
def test_cr_parents_distinct_per_block(rule):
    spec, layout = cr_block_partition(line_graph(64), 16, 4, rule)
    for x in range(50):
        r = _resolve_all(spec, x=bytes([x]), key=bytes([x]))
        for j in range(layout.n_blocks):
            picks = [r[i] for i in spec.dynamic_range if (i - 65) % 4 == j]
            assert len(picks) == 4 and len(set(picks)) == 4
            assert set(picks) <= set(layout.block(j))


def test_cr_block_size():
    spec, layout = cr_block_partition(line_graph(64), 16, 4)
    assert layout.block_size == 8 and spec.k == 8


def test_walk_image_is_k_subset_exhaustive_k4():
    # every reachable draw sequence of the walk over one block of 2k = 8
    from itertools import product

    from pebblemark.graph import DynamicGraphSpec

    base = line_graph(8)
    spec = DynamicGraphSpec(base, 12, ((1, 2, 3, 4, 5, 6, 7, 8),) * 4, WalkResolver(), 8)
    images = set()
    for ms in product(range(8), range(7), range(6), range(5)):
        sess = WalkResolver().session(spec)
        picks = [sess.resolve(9 + t, bytes([m])) for t, m in enumerate(ms)]
        assert len(set(picks)) == 4
        images.add(frozenset(picks))
    assert len(images) == math.comb(8, 4)


def test_walk_needs_label():
    spec, _ = cr_block_partition(line_graph(16), 4, 2)
    sess = WalkResolver().session(spec)
    with pytest.raises(ResolutionError):
        sess.resolve(17, None)


def test_session_enforces_order():
    spec, _ = cr_block_partition(line_graph(16), 4, 2, rule="perm")
    sess = PermResolver().session(spec, b"x")
    with pytest.raises(ResolutionError):
        sess.resolve(18)


def test_resolver_descriptions_round_trip():
    for text in ("walk", "perm", "fixed", "uniform " + "ab" * 32):
        assert resolver_from_description(text).describe() == text
