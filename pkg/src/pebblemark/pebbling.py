"""Parallel/sequential black pebbling on static and dynamic graphs.

Traces are stored as per-round deltas. A ``World`` is what a strategy is
allowed to see: fixed parents, potential-parent sets, and r(i) only after
node i-1 has carried a pebble. ``TraceRecorder`` enforces that timing.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LegalityError, RangeError, ResolutionError, ShapeError
from .graph import Dag, DynamicGraphSpec
from .labeling import LazyResolution, Oracle
from .rng import as_seed, derive

MODES = ("parallel", "sequential")


class World:
    def __init__(self, graph: Dag | DynamicGraphSpec, oracle: Oracle | None = None, x: bytes = b"", key_material: bytes = b""):
        self.graph = graph
        self.n = graph.n
        if isinstance(graph, Dag):
            self.static_len = graph.n
            self._lazy = None
            self._static = graph.parents
        else:
            self.static_len = graph.base.n
            self._lazy = LazyResolution(graph, oracle, x, key_material)
            self._static = graph.base.parents
        self.revealed_upto = self.static_len
        self._parent_cache: list[tuple[int, ...]] = list(self._static)

    @property
    def indeg_bound(self) -> int:
        return self.graph.indeg_bound

    def potential_parents(self, v: int) -> tuple[int, ...]:
        if v <= self.static_len:
            return self._static[v - 1]
        return self.graph.potential_parents(v)

    def possible_parents(self, v: int) -> tuple[int, ...]:
        if v <= self.static_len:
            return self._static[v - 1]
        return self.graph.possible_parents(v)

    def reveal(self, i: int) -> None:
        """Called by the recorder once i-1 is pebbled for the first time."""
        while self.revealed_upto < i:
            j = self.revealed_upto + 1
            self._lazy.resolve(j)
            self._parent_cache.append(self._lazy.parents_of(j))
            self.revealed_upto = j

    def parents(self, v: int) -> tuple[int, ...]:
        if not 1 <= v <= self.n:
            raise RangeError(f"node {v} outside [1, {self.n}]")
        if v > self.revealed_upto:
            raise ResolutionError(f"r({v}) read before node {v - 1} was pebbled")
        return self._parent_cache[v - 1]

    def known_parents(self) -> list[tuple[int, ...]]:
        """Parent lists of every revealed node, index v-1."""
        return self._parent_cache


@dataclass
class PebblingTrace:
    n: int
    mode: str
    deltas: list[tuple[tuple[int, ...], tuple[int, ...]]]
    sizes: list[int]
    phases: list[str]
    parents: list[tuple[int, ...] | None]
    reveals: dict[int, int] = field(default_factory=dict)
    static_len: int = 0

    @property
    def rounds(self) -> int:
        return len(self.deltas)

    def configurations(self) -> Iterable[frozenset[int]]:
        cur: set[int] = set()
        for added, removed in self.deltas:
            cur.difference_update(removed)
            cur.update(added)
            yield frozenset(cur)

    @classmethod
    def from_sets(cls, g: Dag, sets: Sequence[Iterable[int]], mode: str = "parallel") -> "PebblingTrace":
        """Trace of explicit configurations on a static graph."""
        deltas, sizes = [], []
        prev: set[int] = set()
        for s in sets:
            cur = set(s)
            if any(not 1 <= v <= g.n for v in cur):
                raise RangeError("pebble outside the graph")
            deltas.append((tuple(sorted(cur - prev)), tuple(sorted(prev - cur))))
            sizes.append(len(cur))
            prev = cur
        return cls(g.n, mode, deltas, sizes, [""] * len(sets), list(g.parents), {}, g.n)

    def concat(self, other: "PebblingTrace") -> "PebblingTrace":
        """Append ``other``'s configurations after this trace's."""
        if other.n != self.n or other.static_len != self.static_len:
            raise ShapeError("traces are over different graphs")
        last = set(list(self.configurations())[-1]) if self.deltas else set()
        deltas = list(self.deltas)
        for t, cfg in enumerate(other.configurations()):
            deltas.append((tuple(sorted(cfg - last)), tuple(sorted(last - cfg))))
            last = set(cfg)
        shift = self.rounds
        reveals = dict(self.reveals)
        for i, t in other.reveals.items():
            reveals.setdefault(i, t + shift)
        ps = [a if a is not None else b for a, b in zip(self.parents, other.parents)]
        return PebblingTrace(self.n, self.mode, deltas, self.sizes + other.sizes, self.phases + other.phases, ps, reveals, self.static_len)


class TraceRecorder:
    def __init__(self, world: World, mode: str = "parallel"):
        if mode not in MODES:
            raise RangeError(f"mode must be one of {MODES}")
        self.world = world
        self.mode = mode
        self.P: set[int] = set()
        self.deltas: list = []
        self.sizes: list[int] = []
        self.phases: list[str] = []
        self.reveals: dict[int, int] = {}
        self.total = 0
        self.ever: set[int] = set()

    def parents(self, v: int) -> tuple[int, ...]:
        return self.world.parents(v)

    def step(self, add: Iterable[int] = (), remove: Iterable[int] = (), phase: str = "") -> None:
        P = self.P
        add = sorted(v for v in set(add) if v not in P)
        gone = sorted(v for v in set(remove) if v in P)
        if set(add) & set(gone):
            raise ShapeError("node both added and removed in one round")
        P.difference_update(gone)
        P.update(add)
        self.deltas.append((tuple(add), tuple(gone)))
        self.sizes.append(len(P))
        self.phases.append(phase)
        self.total += len(P)
        t = len(self.deltas)
        w = self.world
        for v in add:
            if v not in self.ever:
                self.ever.add(v)
                nxt = v + 1
                if nxt > w.static_len and nxt <= w.n and nxt not in self.reveals:
                    w.reveal(nxt)
                    self.reveals[nxt] = t

    def trace(self) -> PebblingTrace:
        w = self.world
        ps: list = list(w.known_parents()) + [None] * (w.n - w.revealed_upto)
        return PebblingTrace(w.n, self.mode, self.deltas, self.sizes, self.phases, ps, dict(self.reveals), w.static_len)


def violations(trace: PebblingTrace, sliding: bool = True, limit: int = 10) -> list[str]:
    """Reasons ``trace`` is illegal (empty if legal).

    With ``sliding`` a new pebble's parents need only be present in the
    previous round; without it they must also survive the current round.
    """
    out: list[str] = []
    prev: set[int] = set()
    first: dict[int, int] = {}
    for t, (added, removed) in enumerate(trace.deltas, start=1):
        if trace.mode == "sequential" and len(added) > 1:
            out.append(f"round {t}: {len(added)} new pebbles in sequential mode")
        cur = (prev - set(removed)) | set(added)
        for v in added:
            if v in prev:
                out.append(f"round {t}: node {v} already pebbled")
                continue
            first.setdefault(v, t)
            ps = trace.parents[v - 1]
            if ps is None:
                out.append(f"round {t}: node {v} pebbled but r({v}) never revealed")
                continue
            missing = [u for u in ps if u not in prev]
            if missing:
                out.append(f"round {t}: node {v} parents {missing} not pebbled in previous round")
            elif not sliding and any(u not in cur for u in ps):
                out.append(f"round {t}: node {v} parent removed in the same round")
            if v > trace.static_len:
                rt = trace.reveals.get(v)
                if rt is None or rt >= t:
                    out.append(f"round {t}: node {v} placed before r({v}) was revealed")
        if len(cur) != trace.sizes[t - 1]:
            out.append(f"round {t}: recorded size {trace.sizes[t - 1]} != {len(cur)}")
        prev = cur
        if len(out) >= limit:
            break
    for i, rt in trace.reveals.items():
        if first.get(i - 1) != rt:
            out.append(f"r({i}) revealed in round {rt}, but node {i - 1} first pebbled in round {first.get(i - 1)}")
            if len(out) >= limit:
                break
    return out[:limit]


def check_legal(trace: PebblingTrace, sliding: bool = True) -> bool:
    return not violations(trace, sliding, limit=1)


def completes(trace: PebblingTrace, sinks: Iterable[int] | None = None) -> bool:
    """Whether every target node carries a pebble at some round."""
    want = set(sinks) if sinks is not None else {trace.n}
    for added, _ in trace.deltas:
        want.difference_update(added)
    return not want


@dataclass(frozen=True)
class CostReport:
    cc: int
    rounds: int
    max_pebbles: int
    phase_costs: dict
    fallbacks: int = 0


def cc(trace: PebblingTrace, check: bool = True, sliding: bool = True) -> CostReport:
    """Cumulative cost, the sum of configuration sizes."""
    if check:
        bad = violations(trace, sliding, limit=1)
        if bad:
            raise LegalityError(bad[0])
    phase_costs: dict[str, int] = {}
    for ph, s in zip(trace.phases, trace.sizes):
        phase_costs[ph] = phase_costs.get(ph, 0) + s
    return CostReport(sum(trace.sizes), trace.rounds, max(trace.sizes, default=0), phase_costs)


# -- depth reduction ----------------------------------------------------------


def address_bits(n: int) -> int:
    return max(1, (n - 1).bit_length())


def valiant_reduce(g: Dag, eta: int, n_bits: int | None = None) -> set[int]:
    """Heads of the edges in the ``eta`` sparsest bit-classes.

    The class of (u, v) is the top bit where u-1 and v-1 differ. Removing the
    set leaves depth at most 2**(n_bits - eta).
    """
    return _valiant(g.parents, g.n, eta, n_bits or address_bits(g.n))


def _valiant(parent_lists: Sequence[Sequence[int]], n: int, eta: int, bits: int) -> set[int]:
    if not 0 <= eta <= bits:
        raise RangeError(f"eta={eta} outside [0, {bits}]")
    counts = [0] * bits
    for v in range(2, n + 1):
        vv = v - 1
        for u in parent_lists[v - 1]:
            counts[((u - 1) ^ vv).bit_length() - 1] += 1
    chosen = set(sorted(range(bits), key=lambda c: (counts[c], c))[:eta])
    out = set()
    for v in range(2, n + 1):
        vv = v - 1
        for u in parent_lists[v - 1]:
            if ((u - 1) ^ vv).bit_length() - 1 in chosen:
                out.add(v)
                break
    return out


# -- the generic attack -------------------------------------------------------


@dataclass(frozen=True)
class AttackParams:
    n: int
    k: int
    delta: int
    eta: int
    g: int

    def __post_init__(self):
        if self.n < 2 or self.k < 1 or self.delta < 1 or self.g < 1:
            raise RangeError("need n >= 2, k >= 1, delta >= 1, g >= 1")
        if not 0 < self.eta < math.log2(self.n):
            raise RangeError(f"eta={self.eta} must lie in (0, log2 n)")

    @property
    def bits(self) -> int:
        return address_bits(self.n)

    @property
    def e(self) -> int:
        return math.ceil(self.eta * self.delta * self.n / (math.log2(self.n) - self.eta))

    @property
    def d(self) -> int:
        return math.ceil(self.n / 2**self.eta)

    @property
    def depth_cap(self) -> int:
        """Depth actually guaranteed by the bit-class reduction."""
        return 2 ** (self.bits - self.eta)

    @classmethod
    def balanced(cls, n: int, k: int, delta: int, eta: int) -> "AttackParams":
        """Phase length that balances light and balloon costs."""
        g = max(1, round(n / math.sqrt(k * 2**eta)))
        return cls(n, k, delta, eta, g)


def attack_cost_bound(n: int, k: int, delta: int, eta: int, g: int) -> float:
    p = AttackParams(n, k, delta, eta, g)
    return n * p.e + n * g * k + n * n * p.d / g


def generic_attack(world: World, params: AttackParams) -> tuple[PebblingTrace, CostReport]:
    """Light phases of length g separated by balloon phases.

    Between balloons the configuration holds the last node, a depth-reducing
    set for the prefix, and every potential parent the next phase may need.
    """
    n, g = world.n, params.g
    if params.n != n:
        raise ShapeError(f"params for n={params.n}, graph has n={n}")
    rec = TraceRecorder(world, "parallel")
    classes = _EdgeClasses(n, params.bits)
    fallbacks = 0
    rec.step(add=[1], phase="light")
    pending_drop: set[int] = set()
    i = 1
    while i < n:
        if i % g == 0:
            pending_drop, fb = _balloon(rec, world, params, i, classes)
            fallbacks += fb
        ps = rec.parents(i + 1)
        if not rec.P.issuperset(ps):
            # should not happen; repebble sequentially rather than cheat
            fallbacks += 1
            _repebble(rec, world, i)
            pending_drop = set()
        rec.step(add=[i + 1], remove=pending_drop, phase="light")
        pending_drop = set()
        i += 1
    trace = rec.trace()
    rep = cc(trace, check=False)
    return trace, CostReport(rep.cc, rep.rounds, rep.max_pebbles, rep.phase_costs, fallbacks)


class _EdgeClasses:
    """Incremental bit-class bookkeeping so prefix reductions cost O(prefix)."""

    def __init__(self, n: int, bits: int):
        self.bits = bits
        self.masks = np.zeros(n + 1, dtype=np.int64)
        self.counts = [0] * bits
        self.filled = 1

    def reduce(self, parent_lists: Sequence[Sequence[int]], i: int, eta: int) -> set[int]:
        masks, counts = self.masks, self.counts
        for v in range(self.filled + 1, i + 1):
            m = 0
            vv = v - 1
            for u in parent_lists[v - 1]:
                c = ((u - 1) ^ vv).bit_length() - 1
                counts[c] += 1
                m |= 1 << c
            masks[v] = m
        self.filled = max(self.filled, i)
        chosen = sorted(range(self.bits), key=lambda c: (counts[c], c))[:eta]
        cm = sum(1 << c for c in chosen)
        return set(np.flatnonzero(masks[: i + 1] & cm).tolist())


def _balloon(rec: TraceRecorder, world: World, params: AttackParams, i: int, classes: _EdgeClasses) -> tuple[set[int], int]:
    ps = world.known_parents()
    P = rec.P
    dep = [0] * (i + 1)
    layers: list[list[int]] = []
    for v in range(1, i + 1):
        if v in P:
            continue
        m = 0
        for u in ps[v - 1]:
            d = dep[u]
            if d > m:
                m = d
        dep[v] = m + 1
        if m == len(layers):
            layers.append([])
        layers[m].append(v)
    fb = 0
    if len(layers) > params.depth_cap:
        fb = 1
        _repebble(rec, world, i)
    else:
        for layer in layers:
            rec.step(add=layer, phase="balloon")
    keep = classes.reduce(ps, i, params.eta)
    keep.add(i)
    for v in range(i + 1, min(i + params.g, world.n) + 1):
        keep.update(u for u in world.possible_parents(v) if u <= i)
    return rec.P - keep, fb


def _repebble(rec: TraceRecorder, world: World, i: int) -> None:
    for v in range(1, i + 1):
        if v not in rec.P:
            rec.step(add=[v], phase="fallback")


# -- simple strategies ----------------------------------------------------------


def keep_all(world: World) -> PebblingTrace:
    rec = TraceRecorder(world, "sequential")
    for v in range(1, world.n + 1):
        rec.step(add=[v], phase="keep")
    return rec.trace()


def _last_children(world: World) -> list[int]:
    last = list(range(world.n + 1))
    for v in range(2, world.n + 1):
        for u in world.possible_parents(v):
            last[u] = v
    return last


def greedy_discard(world: World) -> PebblingTrace:
    """Sequential; a pebble is dropped once no later node can need it.

    Parents of the node being placed stay through its round, so the result is
    legal even without sliding.
    """
    last = _last_children(world)
    rec = TraceRecorder(world, "sequential")
    for v in range(1, world.n + 1):
        drop = [u for u in rec.P if last[u] < v]
        rec.step(add=[v], remove=drop, phase="greedy")
    return rec.trace()


def exhaustive_min_cc(g: Dag, sequential: bool = True, sliding: bool = False, limit: int = 12) -> int:
    """Minimum cumulative cost to place a pebble on node n, by Dijkstra over
    configurations. Only for tiny graphs."""
    n = g.n
    if n > limit:
        raise RangeError(f"exhaustive search limited to n <= {limit}")
    pmask = [0] * (n + 1)
    for v in range(1, n + 1):
        for u in g.parents[v - 1]:
            pmask[v] |= 1 << (u - 1)
    goal = 1 << (n - 1)
    dist = {0: 0}
    heap = [(0, 0)]
    while heap:
        c, P = heapq.heappop(heap)
        if c > dist.get(P, math.inf):
            continue
        if P & goal:
            return c
        ready = [v for v in range(1, n + 1) if not P >> (v - 1) & 1 and pmask[v] & P == pmask[v]]
        if sequential:
            moves = [1 << (v - 1) for v in ready] + [0]
        else:
            moves = []
            for sub in range(1 << len(ready)):
                m = 0
                for b, v in enumerate(ready):
                    if sub >> b & 1:
                        m |= 1 << (v - 1)
                moves.append(m)
        for new in moves:
            need = 0
            if not sliding:
                for v in range(1, n + 1):
                    if new >> (v - 1) & 1:
                        need |= pmask[v]
            old = P
            sub = old
            while True:
                cfg = sub | new | need
                if cfg & new == new and (cfg & ~(old | new)) == 0 and cfg:
                    nc = c + bin(cfg).count("1")
                    if nc < dist.get(cfg, math.inf):
                        dist[cfg] = nc
                        heapq.heappush(heap, (nc, cfg))
                if sub == 0:
                    break
                sub = (sub - 1) & old
    raise RangeError("node n unreachable")


def best_generic(world_factory: Callable[[], World], n: int, k: int, delta: int, etas: Iterable[int] | None = None, gs: Iterable[int] | None = None) -> tuple[CostReport, AttackParams]:
    """Cheapest generic attack over a grid of (eta, g).

    Without an explicit ``etas`` the search walks eta upward and stops once
    the cost has risen twice in a row past the best seen.
    """
    best = None
    explicit = etas is not None
    if etas is None:
        etas = range(1, max(2, math.ceil(math.log2(n))))
    worse = 0
    for eta in etas:
        if not 0 < eta < math.log2(n):
            continue
        grid = list(gs) if gs is not None else [AttackParams.balanced(n, k, delta, eta).g]
        improved = False
        for g in grid:
            p = AttackParams(n, k, delta, eta, g)
            _, rep = generic_attack(world_factory(), p)
            if best is None or rep.cc < best[0].cc:
                best = (rep, p)
                improved = True
        worse = 0 if improved else worse + 1
        if not explicit and worse >= 2:
            break
    if best is None:
        raise RangeError("empty parameter grid")
    return best


STRATEGIES = ("keep_all", "greedy_discard", "generic")


def strategy_suite(graph: Dag | DynamicGraphSpec, names: Iterable[str] = STRATEGIES, oracle: Oracle | None = None, x: bytes = b"", key_material: bytes = b"") -> dict[str, CostReport]:
    make = lambda: World(graph, oracle, x, key_material)
    out = {}
    for name in names:
        if name == "keep_all":
            out[name] = cc(keep_all(make()))
        elif name == "greedy_discard":
            out[name] = cc(greedy_discard(make()))
        elif name == "generic":
            k = graph.k if isinstance(graph, DynamicGraphSpec) else 1
            out[name] = best_generic(make, graph.n, k, graph.indeg_bound)[0]
        else:
            raise RangeError(f"unknown strategy {name!r}")
    return out


@dataclass(frozen=True)
class CCQuantile:
    delta: float
    value: int
    samples: tuple[int, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))


def cc_distribution(spec: DynamicGraphSpec, strategy: str | Callable[[World], PebblingTrace], trials: int, delta: float, seed=None, oracle: Oracle | None = None) -> CCQuantile:
    """(1-delta)-quantile of cc over fresh inputs and resolver keys."""
    if trials < 1 or not 0 < delta < 1:
        raise RangeError("need trials >= 1 and 0 < delta < 1")
    seed = as_seed(seed)
    fn = {"keep_all": keep_all, "greedy_discard": greedy_discard}.get(strategy, strategy) if isinstance(strategy, str) else strategy
    if isinstance(fn, str):
        raise RangeError(f"unknown strategy {strategy!r}")
    costs = []
    for t in range(trials):
        w = World(spec, oracle, derive(seed, "x", t), derive(seed, "key", t))
        costs.append(cc(fn(w)).cc)
    q = int(np.quantile(costs, 1 - delta, method="inverted_cdf"))
    return CCQuantile(delta, q, tuple(costs))


def serialize_trace(trace: PebblingTrace) -> str:
    """One line per round: ``+added -removed`` followed by the phase name."""
    lines = [f"pebbling v1 {trace.n} {trace.mode} {trace.static_len}"]
    for (added, removed), ph in zip(trace.deltas, trace.phases):
        lines.append("+" + ",".join(map(str, added)) + " -" + ",".join(map(str, removed)) + (f" {ph}" if ph else ""))
    lines += [f"reveal {i} {t}" for i, t in sorted(trace.reveals.items())]
    return "\n".join(lines) + "\n"
