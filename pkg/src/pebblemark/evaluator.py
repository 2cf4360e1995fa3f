"""Three-phase evaluator whose memory trace does not depend on the input.

1. Label the static prefix in node order.
2. For each block of potential parents: fetch it into cache, permute it in
   place under a secret key, write it back in ascending address order.
3. Walk the dynamic tail. Each parent choice is a fresh unused position
   of its block, so the (permuted) slot addresses requested look random.

The evaluator refuses to run when the cache cannot hold a whole block.
"""

from __future__ import annotations

import hashlib
import weakref
from dataclasses import dataclass

from .builders import check_amenable
from .errors import ConfigurationError, ContractError, ParseError
from .graph import DynamicGraphSpec, serialize
from .labeling import Oracle
from .memory import LeakagePattern, TieredMemory
from .perm import IdentityPerm, KeyedPerm, LazyRandomPerm
from .resolvers import WalkResolver, walk_index
from .rng import derive

PERMUTATIONS = ("keyed", "random", "identity")
WORKING_SET = 4  # predecessor label, fresh label, U_j and loop state

_static_memo: "weakref.WeakKeyDictionary[DynamicGraphSpec, dict]" = weakref.WeakKeyDictionary()
_amenable_cache: "weakref.WeakKeyDictionary[DynamicGraphSpec, bool]" = weakref.WeakKeyDictionary()


def block_size(spec: DynamicGraphSpec) -> int:
    return max(len(rs) for rs in spec.potential)


def required_capacity(spec: DynamicGraphSpec) -> int:
    return max(block_size(spec), spec.base.indeg_bound + 1) + WORKING_SET


def setup_key(coins: bytes) -> bytes:
    """Secret permutation key from the evaluator's random coins."""
    return hashlib.sha256(b"setup" + coins).digest()[: max(16, len(coins))]


def _check_contract(spec: DynamicGraphSpec, mem: TieredMemory, oracle: Oracle) -> None:
    if not isinstance(spec.resolver, WalkResolver):
        raise ContractError(f"evaluator implements the walk rule, spec uses {spec.resolver.describe()!r}")
    ok = _amenable_cache.get(spec)
    if ok is None:
        ok = check_amenable(spec, trials=4, oracle=oracle).passed
        _amenable_cache[spec] = ok
    if not ok:
        raise ContractError("graph is not amenable to shuffling")
    need = required_capacity(spec)
    if mem.capacity < need:
        raise ConfigurationError(f"cache holds {mem.capacity} labels, evaluator needs {need}")
    if mem.width != oracle.width:
        raise ConfigurationError("memory line width differs from label width")


@dataclass(frozen=True)
class EvalResult:
    output: bytes
    leakage: LeakagePattern
    round_phase: tuple[str, ...]
    parents: tuple[int, ...]

    def phase_rounds(self, phase: str) -> list[int]:
        return [t for t, p in enumerate(self.round_phase, start=1) if p == phase]

    def phase_events(self, phase: str):
        rounds = set(self.phase_rounds(phase))
        return [e for e in self.leakage.events if e.round in rounds]


def evaluate(spec: DynamicGraphSpec, oracle: Oracle, x: bytes, coins: bytes, mem: TieredMemory, permutation: str = "keyed") -> EvalResult:
    """Compute f(x) through ``mem``; the output never depends on ``coins``."""
    if permutation not in PERMUTATIONS:
        raise ConfigurationError(f"permutation must be one of {PERMUTATIONS}")
    _check_contract(spec, mem, oracle)
    bsize = block_size(spec)
    if permutation == "keyed":
        perm = KeyedPerm(setup_key(coins), bsize)
    elif permutation == "random":
        perm = LazyRandomPerm(setup_key(coins), bsize)
    else:
        perm = IdentityPerm(bsize)

    phases: list[str] = []

    def round_(name: str) -> None:
        mem.begin_round()
        phases.append(name)

    base = spec.base
    H = oracle
    # the static phase ignores the coins, so its end state can be reused
    memo = _static_memo.setdefault(spec, {})
    memo_key = (oracle, x, mem.capacity, mem.policy)
    hit = memo.get(memo_key) if mem.fresh() else None
    if hit is not None:
        snap, prev = hit
        mem.restore(snap)
        phases += ["static"] * base.n
    else:
        for v, ps in enumerate(base.parents, start=1):
            round_("static")
            payload = b"".join(mem.load(u) for u in ps) if ps else x
            prev = H(v, payload)
            mem.store(v, prev)
        if len(phases) == base.n:
            if len(memo) >= 16:
                memo.pop(next(iter(memo)))
            memo[memo_key] = (mem.snapshot(), prev)

    blocks: list[tuple[int, ...]] = []
    for gr in spec.groups():
        blocks.append(spec.potential_parents(gr[0]))
    for j, blk in enumerate(blocks):
        round_("shuffle_load")
        held = [mem.load(a) for a in blk]
        round_("shuffle")
        m = len(blk)
        for p in range(1, m + 1):
            mem.store(blk[p - 1], held[perm.enc(j, p) - 1])
        round_("shuffle_flush")
        mem.flush(blk)

    unused = {j: list(range(1, len(blk) + 1)) for j, blk in enumerate(blocks)}
    taken: dict[int, set[int]] = {j: set() for j in unused}
    check_prefix = bsize <= 16
    parents: list[int] = []
    # prev still holds the last static label: that node may sit in a
    # shuffled block, so it is kept in the working set instead of re-read
    for i in spec.dynamic_range:
        round_("walk")
        j, s = spec.group_of(i)
        blk = blocks[j]
        u = unused[j]
        width = len(blk) - s + 1
        if check_prefix:
            assert set(u[:width]) == set(range(1, len(blk) + 1)) - taken[j], "unused-prefix invariant broken"
        m = walk_index(prev, width)
        pos = u[m - 1]
        u[m - 1], u[width - 1] = u[width - 1], u[m - 1]
        taken[j].add(pos)
        r = blk[pos - 1]
        parents.append(r)
        if r == i - 1:
            lab = H(i, prev)
        else:
            stored = mem.load(blk[_slot(perm, j, pos) - 1])
            lab = H(i, stored + prev)
        mem.store(i, lab)
        prev = lab

    round_("final")
    has_child = bytearray(spec.n + 1)
    for ps in base.parents:
        for u in ps:
            has_child[u] = 1
    for i, r in zip(spec.dynamic_range, parents):
        has_child[i - 1] = 1
        has_child[r] = 1
    where = {v: (j, pos) for j, blk in enumerate(blocks) for pos, v in enumerate(blk, start=1)}

    def read(v: int) -> bytes:
        if v in where:
            j, pos = where[v]
            return mem.load(blocks[j][_slot(perm, j, pos) - 1])
        return mem.load(v)

    out = b"".join(read(v) for v in range(1, spec.n + 1) if not has_child[v])
    mem.flush_all()
    return EvalResult(out, mem.leakage(), tuple(phases), tuple(parents))


def _slot(perm, j: int, pos: int) -> int:
    # slot p holds the label of position perm.enc(j, p); invert to find pos
    return perm.dec(j, pos)


def evaluate_hybrid(spec: DynamicGraphSpec, oracle: Oracle, x: bytes, coins: bytes, mem: TieredMemory) -> EvalResult:
    """Same as ``evaluate`` with a lazily sampled truly random permutation."""
    return evaluate(spec, oracle, x, coins, mem, permutation="random")


# -- test vectors --------------------------------------------------------------------


def graph_hash(spec) -> str:
    return hashlib.sha256(serialize(spec).encode()).hexdigest()


def format_vector(spec: DynamicGraphSpec, x: bytes, coins: bytes, output: bytes) -> str:
    return f"vector v1 {graph_hash(spec)} {x.hex()} {coins.hex()} {output.hex()}"


def parse_vector(line: str) -> tuple[str, bytes, bytes, bytes]:
    parts = line.split()
    if len(parts) != 6 or parts[:2] != ["vector", "v1"]:
        raise ParseError(f"bad vector line {line!r}")
    try:
        return parts[2], bytes.fromhex(parts[3]), bytes.fromhex(parts[4]), bytes.fromhex(parts[5])
    except ValueError:
        raise ParseError(f"bad hex in vector line {line!r}") from None


def derive_coins(seed: bytes, *labels, lam: int = 128) -> bytes:
    return derive(seed, "coins", *labels)[: lam // 8]
