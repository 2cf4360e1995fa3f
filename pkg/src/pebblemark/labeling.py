"""Graph labeling with a keyed hash, and resolution of dynamic graphs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import RangeError, ResolutionError
from .graph import Dag, DynamicGraphSpec, ResolvedDynamicGraph
from .rng import as_seed


@dataclass(frozen=True)
class Oracle:
    """Keyed BLAKE2b standing in for the random oracle.

    ``width`` is the label length in bits (multiple of 8, at most 512).
    """

    seed: bytes = b"\x00" * 32
    width: int = 256

    def __post_init__(self):
        if self.width % 8 or not 8 <= self.width <= 512:
            raise RangeError(f"label width {self.width} must be a multiple of 8 in [8, 512]")
        object.__setattr__(self, "seed", as_seed(self.seed))

    @property
    def nbytes(self) -> int:
        return self.width // 8

    def __call__(self, v: int, payload: bytes) -> bytes:
        h = hashlib.blake2b(v.to_bytes(8, "big"), key=self.seed, digest_size=self.nbytes)
        h.update(payload)
        return h.digest()


def labels(g: Dag, oracle: Oracle, x: bytes) -> list[bytes]:
    """Every label, index v-1 holding node v."""
    out: list[bytes] = []
    for v, ps in enumerate(g.parents, start=1):
        out.append(oracle(v, b"".join(out[u - 1] for u in ps) if ps else x))
    return out


def label(g: Dag, oracle: Oracle, x: bytes, v: int) -> bytes:
    if not 1 <= v <= g.n:
        raise RangeError(f"node {v} outside [1, {g.n}]")
    sub = Dag(v, g.parents[:v], g.indeg_bound)
    return labels(sub, oracle, x)[-1]


def output(g: Dag, oracle: Oracle, x: bytes) -> bytes:
    """Concatenated sink labels, ascending node order."""
    ls = labels(g, oracle, x)
    return b"".join(ls[v - 1] for v in g.sinks())


class LazyResolution:
    """Reveals r(i) on demand, computing labels in order as needed.

    Used both to fully resolve a spec and as the adversary-facing world in
    pebbling runs, where r(i) must not be consulted before i-1 is pebbled.
    """

    def __init__(self, spec: DynamicGraphSpec, oracle: Oracle | None = None, x: bytes = b"", key_material: bytes = b""):
        self.spec = spec
        self.oracle = oracle or Oracle()
        self.x = x
        self._session = spec.resolver.session(spec, key_material)
        self._need_labels = spec.resolver.uses_labels
        self.r: list[int] = []
        self._labels: list[bytes] | None = None

    @property
    def resolved_upto(self) -> int:
        return self.spec.base.n + len(self.r)

    def _ensure_labels(self) -> list[bytes]:
        if self._labels is None:
            self._labels = labels(self.spec.base, self.oracle, self.x)
        return self._labels

    def resolve(self, i: int) -> int:
        spec = self.spec
        if not spec.is_dynamic(i) or i > spec.n:
            raise RangeError(f"node {i} is not dynamic")
        while self.resolved_upto < i:
            j = self.resolved_upto + 1
            prev = None
            if self._need_labels:
                prev = self._ensure_labels()[j - 2]
            r = self._session.resolve(j, prev)
            self.r.append(r)
            if self._need_labels:
                ls = self._labels
                payload = ls[j - 2] if r == j - 1 else ls[r - 1] + ls[j - 2]
                ls.append(self.oracle(j, payload))
        return self.r[i - spec.base.n - 1]

    def parents_of(self, i: int) -> tuple[int, ...]:
        if not self.spec.is_dynamic(i):
            return self.spec.base.parents[i - 1]
        if i > self.resolved_upto:
            raise ResolutionError(f"r({i}) has not been revealed")
        r = self.r[i - self.spec.base.n - 1]
        return (i - 1,) if r == i - 1 else (r, i - 1)

    def all_labels(self) -> list[bytes]:
        self.resolve(self.spec.n)
        ls = self._ensure_labels()
        if len(ls) < self.spec.n:
            ls = labels(self.dag(), self.oracle, self.x)
            self._labels = ls
        return ls

    def dag(self) -> Dag:
        self.resolve(self.spec.n)
        spec = self.spec
        ps = list(spec.base.parents)
        ps += [self.parents_of(i) for i in spec.dynamic_range]
        return Dag(spec.n, tuple(ps), spec.indeg_bound)


def resolve(spec: DynamicGraphSpec, oracle: Oracle | None = None, x: bytes = b"", key_material: bytes = b"") -> ResolvedDynamicGraph:
    lr = LazyResolution(spec, oracle, x, key_material)
    return ResolvedDynamicGraph(lr.dag(), tuple(lr.r), {"resolver": spec.resolver.describe()})


def spec_output(spec: DynamicGraphSpec, oracle: Oracle, x: bytes, key_material: bytes = b"") -> bytes:
    """f(x) for a dynamic graph: resolve, then concatenate sink labels."""
    lr = LazyResolution(spec, oracle, x, key_material)
    ls = lr.all_labels()
    g = lr.dag()
    return b"".join(ls[v - 1] for v in g.sinks())
