"""Graph families: line graphs, a layered depth-robust stand-in, Beneš
superconcentrators, overlays, block-partition extensions, and the two
sampled constructions (uniform and collision-resistant final layer).

Every builder is a pure function of its arguments; randomness comes from
the seed via ``rng.stream``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import RangeError, ShapeError
from .graph import Dag, DynamicGraphSpec, depth_without
from .labeling import LazyResolution, Oracle
from .pebbling import _valiant, address_bits
from .resolvers import FixedResolver, Resolver, UniformResolver, WalkResolver, PermResolver
from .rng import as_seed, derive, stream


def line_graph(n: int) -> Dag:
    if n < 1:
        raise RangeError("line graph needs n >= 1")
    return Dag(n, ((),) + tuple((v - 1,) for v in range(2, n + 1)), 1 if n > 1 else 0)


def random_dag(n: int, delta: int, seed=None) -> Dag:
    """Path edge plus up to delta-1 uniform earlier parents per node."""
    if n < 1 or delta < 1:
        raise RangeError("need n >= 1 and delta >= 1")
    rng = stream(as_seed(seed), "random-dag", n, delta)
    ps = [()]
    for v in range(2, n + 1):
        extra = {rng.randrange(1, v) for _ in range(delta - 1)}
        ps.append(tuple(sorted(extra | {v - 1})))
    return Dag(n, tuple(ps), delta)


def pad(h: Dag, m: int) -> Dag:
    """Prepend m isolated nodes."""
    if m < 0:
        raise ShapeError("negative padding")
    shifted = tuple(tuple(u + m for u in ps) for ps in h.parents)
    return Dag(h.n + m, ((),) * m + shifted, h.indeg_bound)


def overlay(g1: Dag, h: Dag, g2: Dag) -> Dag:
    """Union of h's edges, g1's edges on h's first g1.n nodes, and g2's edges
    on h's last g2.n nodes."""
    if g1.n > h.n or g2.n > h.n:
        raise ShapeError(f"overlay parts ({g1.n}, {g2.n}) larger than host ({h.n})")
    shift = h.n - g2.n
    ps = [set(p) for p in h.parents]
    for v, p in enumerate(g1.parents, start=1):
        ps[v - 1].update(p)
    for v, p in enumerate(g2.parents, start=1):
        ps[v + shift - 1].update(u + shift for u in p)
    return Dag.build(ps)


# -- depth-robust stand-in ------------------------------------------------------


@dataclass(frozen=True)
class DepthRobustProfile:
    """Empirical robustness estimate of a layered stack.

    ``gamma``: no depth-reducing set found by the audit has at most gamma*n
    nodes. ``c``: after removing the largest such set, at least c*n outputs
    still reach c*n inputs. Both are estimates, not proofs.
    """

    e_target: float
    d_target: float
    gamma: float
    c: float
    epsilon: float
    audited: tuple = field(default=(), compare=False)
    degraded: bool = False

    def __post_init__(self):
        if not 0 < self.gamma <= self.c < 1:
            raise ShapeError(f"profile needs 0 < gamma <= c < 1, got {self.gamma}, {self.c}")


@dataclass(frozen=True)
class Stack:
    dag: Dag
    n_io: int
    layers: int

    @property
    def inputs(self) -> range:
        return range(1, self.n_io + 1)

    @property
    def outputs(self) -> range:
        return range(self.dag.n - self.n_io + 1, self.dag.n + 1)


def layered_stack(n: int, epsilon: float, seed=None, delta: int = 3) -> Stack:
    if n < 2 or not 0 < epsilon < 1:
        raise RangeError("need n >= 2 and 0 < epsilon < 1")
    layers = max(2, math.ceil(1 / epsilon))
    rng = stream(as_seed(seed), "stack", n, layers, delta)
    ps: list[tuple[int, ...]] = [()] * n
    for layer in range(1, layers):
        below = (layer - 1) * n
        for p in range(n):
            v = layer * n + p + 1
            picks = rng.sample(range(below + 1, below + n + 1), min(delta - 1, n))
            if p:
                picks.append(v - 1)
            ps.append(tuple(sorted(picks)))
    return Stack(Dag(len(ps), tuple(ps), delta), n, layers)


def _input_reach(g: Dag, n_io: int, removed: set[int]) -> list[int]:
    """For each output, how many inputs still reach it avoiding ``removed``."""
    reach = [0] * (g.n + 1)
    for v in range(1, g.n + 1):
        if v in removed:
            continue
        r = 1 << (v - 1) if v <= n_io else 0
        for u in g.parents[v - 1]:
            r |= reach[u]
        reach[v] = r
    return [reach[v].bit_count() for v in range(g.n - n_io + 1, g.n + 1)]


def audit_depth_robust(stack: Stack, epsilon: float) -> DepthRobustProfile:
    """Search bit-class depth reductions at every eta and summarise."""
    g, n = stack.dag, stack.n_io
    d_target = n ** (1 - epsilon) / 4
    bits = address_bits(g.n)
    found = []
    for eta in range(1, bits):
        s = _valiant(g.parents, g.n, eta, bits)
        found.append((eta, len(s), depth_without(g.parents, g.n, s), s))
    reducing = [size for _, size, dep, _ in found if dep < d_target]
    degraded = False
    if reducing:
        gamma = (min(reducing) - 1) / n
    else:
        gamma = max(size for _, size, _, _ in found) / n
    def goodness(budget: float) -> float:
        small = [s for _, size, _, s in found if size <= budget * n]
        worst = max(small, key=len) if small else set()
        counts = sorted(_input_reach(g, n, worst), reverse=True)
        c = max(min(t, counts[t - 1]) for t in range(1, n + 1)) / n
        return min(c, (n - 1) / n)

    # largest budget whose measured goodness is at least the budget itself
    budgets = sorted({gamma} | {size / n for _, size, _, _ in found if size / n < gamma}, reverse=True)
    for gamma in budgets:
        c = goodness(gamma)
        if gamma <= c:
            break
    else:
        gamma = c = goodness(0.0)
    if gamma <= 0:
        gamma, degraded = min(1 / (2 * n), c), True
    audited = tuple((eta, size, dep) for eta, size, dep, _ in found)
    return DepthRobustProfile(gamma, d_target, gamma, c, epsilon, audited, degraded)


def depth_robust_stack(n: int, epsilon: float, seed=None, delta: int = 3) -> tuple[Dag, DepthRobustProfile]:
    st = layered_stack(n, epsilon, seed, delta)
    return st.dag, audit_depth_robust(st, epsilon)


# -- superconcentrators -------------------------------------------------------


def benes_stage_bits(width: int) -> list[int]:
    levels = width.bit_length() - 1
    return list(range(levels)) + list(range(levels - 2, -1, -1))


def superconcentrator(n: int, flavor: str = "butterfly") -> Dag:
    """Beneš network on n wires; inputs are nodes 1..n, outputs the last n."""
    if flavor == "recursive":
        raise RangeError("recursive linear-size flavor is not built; use 'butterfly'")
    if flavor != "butterfly":
        raise RangeError(f"unknown flavor {flavor!r}")
    if n < 2 or n & (n - 1):
        raise RangeError(f"butterfly needs n a power of two >= 2, got {n}")
    ps: list[tuple[int, ...]] = [()] * n
    for level, bit in enumerate(benes_stage_bits(n)):
        base = level * n
        for i in range(n):
            ps.append(tuple(sorted((base + i + 1, base + (i ^ (1 << bit)) + 1))))
    return Dag(len(ps), tuple(ps), 2)


def superconc_overlay(g: Dag, n_io: int) -> Dag:
    """Hang a superconcentrator off g's last n_io nodes, with a path across
    its outputs."""
    if n_io > g.n:
        raise ShapeError(f"graph has {g.n} nodes, cannot expose {n_io} outputs")
    sc = superconcentrator(n_io)
    return overlay(g, pad(sc, g.n - n_io), line_graph(n_io))


def grates_overlay(g: Dag, n_io: int, epsilon: float, seed=None) -> Dag:
    if n_io > g.n:
        raise ShapeError(f"graph has {g.n} nodes, cannot expose {n_io} outputs")
    st = layered_stack(n_io, epsilon, seed)
    return overlay(g, pad(st.dag, g.n - n_io), line_graph(n_io))


# -- block partitions ------------------------------------------------------------


@dataclass(frozen=True)
class BlockLayout:
    n_blocks: int
    block_size: int
    offsets: tuple[int, ...]

    def block(self, j: int) -> range:
        return range(self.offsets[j], self.offsets[j] + self.block_size)

    def validate(self, lo: int, hi: int) -> None:
        """Blocks must tile [lo, hi] exactly."""
        covered = sorted(v for j in range(self.n_blocks) for v in self.block(j))
        if len(self.offsets) != self.n_blocks or covered != list(range(lo, hi + 1)):
            raise ShapeError("blocks do not partition the output range")


def _extend(g: Dag, n: int, k: int, block_size: int, resolver: Resolver) -> tuple[DynamicGraphSpec, BlockLayout]:
    if k < 1 or n < 1 or n % k:
        raise ShapeError(f"k={k} must divide N={n}")
    n_blocks = n // k
    out_lo = g.n - n_blocks * block_size + 1
    if out_lo < 1:
        raise ShapeError(f"graph has {g.n} nodes, needs {n_blocks * block_size} outputs")
    layout = BlockLayout(n_blocks, block_size, tuple(out_lo + j * block_size for j in range(n_blocks)))
    layout.validate(out_lo, g.n)
    blocks = [tuple(layout.block(j)) for j in range(n_blocks)]
    potential = tuple(blocks[t % n_blocks] for t in range(n))
    return DynamicGraphSpec(g, g.n + n, potential, resolver, block_size), layout


def block_partition(g: Dag, n: int, k: int, seed=None) -> tuple[DynamicGraphSpec, BlockLayout]:
    """Append n path nodes; the t-th draws its parent uniformly from block t mod (n/k)."""
    return _extend(g, n, k, k, UniformResolver(derive(as_seed(seed), "block-partition")))


CR_RULES = {"walk": WalkResolver, "perm": PermResolver}


def cr_block_partition(g: Dag, n: int, k: int, rule: str = "walk") -> tuple[DynamicGraphSpec, BlockLayout]:
    """Collision-free variant: blocks of 2k over g's last 2n nodes, k draws each."""
    if rule not in CR_RULES:
        raise RangeError(f"rule must be one of {sorted(CR_RULES)}")
    return _extend(g, n, k, 2 * k, CR_RULES[rule]())


@dataclass(frozen=True)
class Construction:
    spec: DynamicGraphSpec
    layout: BlockLayout
    n: int
    k: int
    alpha: float
    base_len: int


def _core(n_io: int, epsilon: float, seed: bytes) -> Dag:
    g1 = layered_stack(n_io, epsilon, derive(seed, "g1")).dag
    g2 = superconc_overlay(g1, n_io)
    return grates_overlay(g2, n_io, epsilon, derive(seed, "g3"))


def _check_params(n: int, epsilon: float, k: int) -> None:
    if not 0 < epsilon < 1:
        raise RangeError("epsilon must lie in (0, 1)")
    if k < 1 or n % k:
        raise ShapeError(f"k={k} must divide N={n}")


def sample_fig4(n: int, epsilon: float, k: int, seed=None) -> Construction:
    """Uniform block-partition layer over stack, superconcentrator, stack."""
    _check_params(n, epsilon, k)
    seed = as_seed(seed)
    g3 = _core(n, epsilon, seed)
    spec, layout = block_partition(g3, n, k, derive(seed, "g4"))
    return Construction(spec, layout, n, k, g3.n / n, g3.n)


def sample_fig5(n: int, epsilon: float, k: int, seed=None, rule: str = "walk") -> Construction:
    """Collision-resistant variant built at interface width 2N."""
    _check_params(n, epsilon, k)
    seed = as_seed(seed)
    g3 = _core(2 * n, epsilon, seed)
    spec, layout = cr_block_partition(g3, n, k, rule)
    return Construction(spec, layout, n, k, g3.n / n, g3.n)


def random_static_spec(n: int, seed=None) -> DynamicGraphSpec:
    """k = 1: every node past the second has one fixed, uniformly chosen
    earlier parent besides its predecessor."""
    if n < 3:
        raise RangeError("need n >= 3")
    rng = stream(as_seed(seed), "static-spec", n)
    potential = tuple((rng.randrange(1, i - 1),) for i in range(3, n + 1))
    return DynamicGraphSpec(line_graph(2), n, potential, FixedResolver(), 1)


# -- amenability -----------------------------------------------------------------


CLAUSES = (
    "uniform_group_size",
    "large_potential_parents",
    "potential_parents_outside_tail",
    "same_potential_parents_in_group",
    "disjoint_potential_parents_across_groups",
    "no_parent_collision",
    "static_prefix",
)


@dataclass(frozen=True)
class AmenabilityReport:
    clauses: dict

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.clauses.values())

    def failures(self) -> list[str]:
        return [name for name, (ok, _) in self.clauses.items() if not ok]


def round_robin_groups(spec: DynamicGraphSpec, n_groups: int) -> list[list[int]]:
    nodes = list(spec.dynamic_range)
    return [nodes[j::n_groups] for j in range(n_groups)]


def check_amenable(spec: DynamicGraphSpec, groups: list[list[int]] | None = None, trials: int = 64, seed=None, oracle: Oracle | None = None) -> AmenabilityReport:
    """Evaluate the seven shuffling-friendliness clauses.

    ``groups`` defaults to classes of identical potential-parent sets. The
    collision clause needs a resolver that certifies collision freedom and
    no collision across ``trials`` random resolutions.
    """
    tail = list(spec.dynamic_range)
    if groups is None:
        groups = spec.groups()
    res: dict[str, tuple[bool, str]] = {}
    sizes = {len(gr) for gr in groups}
    flat = sorted(v for gr in groups for v in gr)
    size = len(groups[0]) if groups else 0
    ok = len(sizes) == 1 and flat == tail
    res["uniform_group_size"] = (ok, f"group sizes {sorted(sizes)}; cover tail: {flat == tail}")

    small = [v for v in tail if len(spec.potential_parents(v)) < size]
    res["large_potential_parents"] = (not small, f"{len(small)} nodes with fewer than {size} potential parents")

    inside = [v for v in tail if max(spec.potential_parents(v)) > spec.base.n]
    res["potential_parents_outside_tail"] = (not inside, f"{len(inside)} nodes draw from the tail")

    mixed = [j for j, gr in enumerate(groups) if len({spec.potential_parents(v) for v in gr}) > 1]
    res["same_potential_parents_in_group"] = (not mixed, f"groups with mixed sets: {mixed[:5]}")

    owner: dict[int, int] = {}
    clash = 0
    for j, gr in enumerate(groups):
        for u in set().union(*(spec.potential_parents(v) for v in gr)) if gr else ():
            if owner.setdefault(u, j) != j:
                clash += 1
    res["disjoint_potential_parents_across_groups"] = (clash == 0, f"{clash} shared potential parents")

    certified = spec.resolver.collision_free
    collisions = 0
    seed = as_seed(seed)
    for t in range(trials):
        lr = LazyResolution(spec, oracle, derive(seed, "x", t), derive(seed, "key", t))
        lr.resolve(spec.n)
        r = dict(zip(tail, lr.r))
        for gr in groups:
            picks = [r[v] for v in gr]
            if len(set(picks)) != len(picks):
                collisions += 1
        if collisions:
            break
    ok = certified and collisions == 0
    res["no_parent_collision"] = (ok, f"certified={certified}; groups with collisions in trials: {collisions}")

    ok = spec.base.n >= 1 and all(not spec.is_dynamic(v) for v in range(1, spec.base.n + 1))
    res["static_prefix"] = (ok and spec.n - spec.base.n == len(tail), f"static prefix of {spec.base.n} nodes")
    return AmenabilityReport(res)
