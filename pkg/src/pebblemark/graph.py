"""DAG core: static graphs, k-restricted dynamic graph specs, and text I/O.

Nodes are 1-based and numbered in topological order, so every edge (u, v)
has u < v. Formulas written 0-based in the literature are translated at the
call sites that use them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import ParseError, RangeError, ShapeError

if TYPE_CHECKING:
    from .resolvers import Resolver


@dataclass(frozen=True)
class Dag:
    """Immutable DAG. ``parents[v - 1]`` is the sorted parent tuple of node v."""

    n: int
    parents: tuple[tuple[int, ...], ...]
    indeg_bound: int

    def __post_init__(self):
        if self.n < 0 or len(self.parents) != self.n:
            raise ShapeError(f"expected {self.n} parent lists, got {len(self.parents)}")
        for v, ps in enumerate(self.parents, start=1):
            if len(ps) > self.indeg_bound:
                raise ShapeError(f"node {v} has indegree {len(ps)} > bound {self.indeg_bound}")
            prev = 0
            for u in ps:
                if not prev < u < v:
                    raise ShapeError(f"bad parent {u} of node {v} (must be sorted, unique, < {v})")
                prev = u

    @classmethod
    def build(cls, parent_lists: Iterable[Iterable[int]], indeg_bound: int | None = None) -> "Dag":
        ps = tuple(tuple(sorted(set(p))) for p in parent_lists)
        if indeg_bound is None:
            indeg_bound = max((len(p) for p in ps), default=0)
        return cls(len(ps), ps, indeg_bound)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(self.n)]
        for v, ps in enumerate(self.parents, start=1):
            for u in ps:
                kids[u - 1].append(v)
        return tuple(tuple(k) for k in kids)

    @property
    def edge_count(self) -> int:
        return sum(len(p) for p in self.parents)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v, ps in enumerate(self.parents, start=1) for u in ps]

    def sources(self) -> list[int]:
        return [v for v, ps in enumerate(self.parents, start=1) if not ps]

    def sinks(self) -> list[int]:
        return [v for v, ks in enumerate(self.children, start=1) if not ks]


def _check_node(g: Dag, v: int) -> None:
    if not 1 <= v <= g.n:
        raise RangeError(f"node {v} outside [1, {g.n}]")


def parents(g: Dag, v: int) -> set[int]:
    _check_node(g, v)
    return set(g.parents[v - 1])


def ancestors(g: Dag, vs: Iterable[int]) -> set[int]:
    """All nodes with a path into ``vs``; members of ``vs`` only if reachable from ``vs``."""
    seen: set[int] = set()
    todo = deque()
    for v in vs:
        _check_node(g, v)
        todo.append(v)
    while todo:
        for u in g.parents[todo.popleft() - 1]:
            if u not in seen:
                seen.add(u)
                todo.append(u)
    return seen


def depth(g: Dag) -> int:
    """Number of nodes on the longest directed path."""
    return depth_without(g.parents, g.n, ())


def depth_without(parent_lists: Sequence[Sequence[int]], n: int, removed: Iterable[int]) -> int:
    """Longest path in the subgraph of nodes 1..n avoiding ``removed``.

    Works on raw parent lists so callers can query prefixes without
    materialising a new Dag.
    """
    gone = removed if isinstance(removed, (set, frozenset)) else set(removed)
    best = 0
    dep = [0] * (n + 1)
    for v in range(1, n + 1):
        if v in gone:
            continue
        m = 0
        for u in parent_lists[v - 1]:
            if dep[u] > m:
                m = dep[u]
        dep[v] = m + 1
        if m + 1 > best:
            best = m + 1
    return best


def remove(g: Dag, s: Iterable[int]) -> tuple[Dag, tuple[int, ...]]:
    """Delete ``s`` and incident edges.

    Returns the induced subgraph plus ``kept``: new node j is old node ``kept[j-1]``.
    """
    gone = set(s)
    for v in gone:
        _check_node(g, v)
    kept = tuple(v for v in range(1, g.n + 1) if v not in gone)
    new_id = {old: new for new, old in enumerate(kept, start=1)}
    ps = tuple(tuple(new_id[u] for u in g.parents[v - 1] if u in new_id) for v in kept)
    return Dag(len(kept), ps, g.indeg_bound), kept


def prefix(g: Dag, i: int) -> Dag:
    """The subgraph induced by nodes 1..i."""
    _check_node(g, i)
    return Dag(i, g.parents[:i], g.indeg_bound)


def check_reducibility_witness(g: Dag, s: Iterable[int], d: int) -> bool:
    """True iff every path of more than ``d`` nodes meets ``s``."""
    return depth_without(g.parents, g.n, set(s)) <= d


@dataclass(frozen=True, eq=False)
class DynamicGraphSpec:
    """A k-restricted dynamic graph.

    Nodes 1..base.n form the static prefix. Every later node i has parents
    i-1 and r(i), where r(i) is picked from ``potential[i - base.n - 1]`` by
    ``resolver`` only once node i-1 carries a pebble (or has a label).
    """

    base: Dag
    n: int
    potential: tuple[tuple[int, ...], ...]
    resolver: "Resolver"
    k: int
    _groups: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.base.n < 1:
            raise ShapeError("static prefix must be non-empty")
        if len(self.potential) != self.n - self.base.n:
            raise ShapeError(f"need {self.n - self.base.n} potential-parent sets, got {len(self.potential)}")
        for i, rs in self.dynamic_items():
            if not rs or len(rs) > self.k:
                raise ShapeError(f"node {i}: |R| = {len(rs)} not in [1, {self.k}]")
            prev = 0
            for u in rs:
                # r(i) = i-1 is tolerated: it only arises for k = N (single block)
                if not prev < u < i:
                    raise ShapeError(f"node {i}: bad potential parent {u}")
                prev = u

    @property
    def static_len(self) -> int:
        return self.base.n

    @property
    def dynamic_range(self) -> range:
        return range(self.base.n + 1, self.n + 1)

    @property
    def indeg_bound(self) -> int:
        return max(self.base.indeg_bound, 2)

    def is_dynamic(self, v: int) -> bool:
        return v > self.base.n

    def dynamic_items(self):
        return zip(range(self.base.n + 1, self.n + 1), self.potential)

    def potential_parents(self, v: int) -> tuple[int, ...]:
        """R_v for dynamic nodes; the fixed parent set for static ones."""
        if not 1 <= v <= self.n:
            raise RangeError(f"node {v} outside [1, {self.n}]")
        if v <= self.base.n:
            return self.base.parents[v - 1]
        return self.potential[v - self.base.n - 1]

    def possible_parents(self, v: int) -> tuple[int, ...]:
        """Every node that may end up a parent of v (adds the path edge)."""
        if v <= self.base.n:
            return self.base.parents[v - 1]
        return tuple(sorted(set(self.potential[v - self.base.n - 1]) | {v - 1}))

    def group_of(self, i: int) -> tuple[int, int]:
        """(group index j, occurrence s) for dynamic node i, both 0/1-based.

        Groups are classes of identical R_i, numbered by first appearance;
        s counts how many group members precede i, plus one.
        """
        if not self._groups:
            index: dict[tuple[int, ...], int] = {}
            seen: list[int] = []
            table = {}
            for v, rs in self.dynamic_items():
                j = index.setdefault(rs, len(index))
                if j == len(seen):
                    seen.append(0)
                seen[j] += 1
                table[v] = (j, seen[j])
            self._groups.update(table)
        return self._groups[i]

    def groups(self) -> list[list[int]]:
        out: list[list[int]] = []
        for v in self.dynamic_range:
            j, _ = self.group_of(v)
            if j == len(out):
                out.append([])
            out[j].append(v)
        return out


@dataclass(frozen=True)
class ResolvedDynamicGraph:
    dag: Dag
    r: tuple[int, ...]
    provenance: dict = field(compare=False)


# -- text format ------------------------------------------------------------


def serialize(obj: Dag | DynamicGraphSpec) -> str:
    if isinstance(obj, Dag):
        lines = [f"dag {obj.n} {obj.indeg_bound}"]
        lines += [_node_line(v, ps) for v, ps in enumerate(obj.parents, start=1)]
        return "\n".join(lines) + "\n"
    spec = obj
    lines = [
        f"dyn {spec.n} {spec.k} {spec.base.n}",
        f"indeg {spec.base.indeg_bound}",
        f"resolver {spec.resolver.describe()}",
    ]
    lines += [_node_line(v, ps) for v, ps in enumerate(spec.base.parents, start=1)]
    lines += [f"{v} ? " + " ".join(map(str, rs)) for v, rs in spec.dynamic_items()]
    return "\n".join(lines) + "\n"


def _node_line(v: int, ps: Sequence[int]) -> str:
    return f"{v}:" + "".join(f" {u}" for u in ps)


def parse(text: str) -> Dag | DynamicGraphSpec:
    from .resolvers import resolver_from_description

    rows = [(no, ln.strip()) for no, ln in enumerate(text.splitlines(), start=1)]
    rows = [(no, ln) for no, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError("empty graph file", 1)
    no, head = rows[0]
    words = head.split()
    try:
        nums = [int(w) for w in words[1:]]
    except ValueError:
        raise ParseError(f"bad header {head!r}", no) from None
    if words[0] == "dag" and len(nums) == 2:
        n, bound = nums
        body = rows[1:]
        ps = _parse_static(body, n, 1)
        if len(body) != n:
            raise ParseError(f"expected {n} node lines, found {len(body)}", body[-1][0] if body else no)
        try:
            return Dag(n, tuple(ps), bound)
        except ShapeError as exc:
            raise ParseError(str(exc), no) from None
    if words[0] != "dyn" or len(nums) != 3:
        raise ParseError(f"bad header {head!r}", no)
    n, k, static_len = nums
    bound = None
    resolver = None
    body = rows[1:]
    while body and body[0][1].split()[0] in ("indeg", "resolver"):
        dno, directive = body.pop(0)
        key, _, rest = directive.partition(" ")
        try:
            if key == "indeg":
                bound = int(rest)
            else:
                resolver = resolver_from_description(rest)
        except (ValueError, KeyError) as exc:
            raise ParseError(f"bad directive {directive!r}: {exc}", dno) from None
    if resolver is None:
        raise ParseError("dynamic graph needs a 'resolver' line", no)
    static_ps = _parse_static(body[:static_len], static_len, 1)
    potential = []
    for (lno, ln), v in zip(body[static_len:], range(static_len + 1, n + 1)):
        left, sep, right = ln.partition("?")
        if not sep or left.strip() != str(v):
            raise ParseError(f"expected '{v} ? ...', got {ln!r}", lno)
        try:
            potential.append(tuple(int(w) for w in right.split()))
        except ValueError:
            raise ParseError(f"non-integer potential parent in {ln!r}", lno) from None
    if len(body) != n:
        raise ParseError(f"expected {n} node lines, found {len(body)}", body[-1][0] if body else no)
    try:
        base = Dag(static_len, tuple(static_ps), bound if bound is not None else max(map(len, static_ps), default=0))
        return DynamicGraphSpec(base, n, tuple(potential), resolver, k)
    except ShapeError as exc:
        raise ParseError(str(exc), no) from None


def _parse_static(rows, count: int, first: int) -> list[tuple[int, ...]]:
    out = []
    for (lno, ln), v in zip(rows, range(first, first + count)):
        left, sep, right = ln.partition(":")
        if not sep or left.strip() != str(v):
            raise ParseError(f"expected node line for {v}, got {ln!r}", lno)
        try:
            ps = tuple(int(w) for w in right.split())
        except ValueError:
            raise ParseError(f"non-integer parent in {ln!r}", lno) from None
        if any(not 1 <= u < v for u in ps):
            raise ParseError(f"node {v}: parents must lie in [1, {v - 1}]", lno)
        out.append(ps)
    return out
