"""Rules that pick r(i) out of the potential-parent set R_i.

A resolver is stateless; ``session`` opens per-evaluation state. Sessions must
be asked about dynamic nodes in increasing order, each exactly once, and
receive the label of node i-1 (``None`` is fine for rules that ignore it).
"""

from __future__ import annotations

from typing import TYPE_CHECKING, ClassVar

from .errors import ResolutionError
from .perm import KeyedPerm
from .rng import as_seed, derive

if TYPE_CHECKING:
    from .graph import DynamicGraphSpec


class Resolver:
    name: ClassVar[str] = ""
    collision_free: ClassVar[bool] = False
    uses_labels: ClassVar[bool] = False

    def describe(self) -> str:
        return self.name

    def session(self, spec: "DynamicGraphSpec", key_material: bytes = b"") -> "Session":
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<resolver {self.describe()}>"


class Session:
    def __init__(self, spec: "DynamicGraphSpec"):
        self.spec = spec
        self._next = spec.base.n + 1

    def resolve(self, i: int, prev_label: bytes | None = None) -> int:
        if i != self._next:
            raise ResolutionError(f"resolver asked for node {i}, expected {self._next}")
        self._next += 1
        return self._pick(i, prev_label)

    def _pick(self, i: int, prev_label: bytes | None) -> int:
        raise NotImplementedError


class FixedResolver(Resolver):
    """Always the smallest member of R_i; the natural rule when k = 1."""

    name = "fixed"

    def session(self, spec, key_material=b""):
        s = Session(spec)
        s._pick = lambda i, _lab: spec.potential_parents(i)[0]
        return s


class UniformResolver(Resolver):
    """Independent uniform choice per node, keyed by (seed, key material, i)."""

    name = "uniform"

    def __init__(self, seed: bytes | None = None):
        self.seed = as_seed(seed)

    def describe(self) -> str:
        return f"uniform {self.seed.hex()}"

    def session(self, spec, key_material=b""):
        s = Session(spec)

        def pick(i, _lab):
            rs = spec.potential_parents(i)
            h = int.from_bytes(derive(self.seed, key_material, i), "big")
            return rs[h % len(rs)]

        s._pick = pick
        return s


class PermResolver(Resolver):
    """s-th occurrence of group j takes position Enc(x||j, s) of sorted R_i."""

    name = "perm"
    collision_free = True

    def session(self, spec, key_material=b""):
        s = Session(spec)
        perms: dict[int, KeyedPerm] = {}

        def pick(i, _lab):
            rs = spec.potential_parents(i)
            j, occ = spec.group_of(i)
            if occ > len(rs):
                raise ResolutionError(f"group {j} has more members than potential parents")
            p = perms.get(len(rs))
            if p is None:
                p = perms[len(rs)] = KeyedPerm(derive(key_material, "perm-resolver"), len(rs))
            return rs[p.enc(j, occ) - 1]

        s._pick = pick
        return s


class WalkResolver(Resolver):
    """Label-driven draw without replacement.

    Each group keeps an array of unused positions in its first
    ``size - s + 1`` entries; the previous label picks one and the chosen entry
    is swapped behind the live window.
    """

    name = "walk"
    collision_free = True
    uses_labels = True

    def session(self, spec, key_material=b""):
        return WalkSession(spec)


class WalkSession(Session):
    def __init__(self, spec):
        super().__init__(spec)
        self.unused: dict[int, list[int]] = {}

    def _pick(self, i, prev_label):
        if prev_label is None:
            raise ResolutionError(f"walk rule needs the label of node {i - 1}")
        rs = self.spec.potential_parents(i)
        j, occ = self.spec.group_of(i)
        width = len(rs) - occ + 1
        if width < 1:
            raise ResolutionError(f"group {j} has more members than potential parents")
        u = self.unused.setdefault(j, list(range(1, len(rs) + 1)))
        m = walk_index(prev_label, width)
        pos = u[m - 1]
        u[m - 1], u[width - 1] = u[width - 1], u[m - 1]
        return rs[pos - 1]


def walk_index(label: bytes, width: int) -> int:
    """1-based index into the live window, derived from a label."""
    return int.from_bytes(label, "big") % width + 1


_REGISTRY = {cls.name: cls for cls in (FixedResolver, UniformResolver, PermResolver, WalkResolver)}


def resolver_from_description(text: str) -> Resolver:
    name, _, arg = text.strip().partition(" ")
    cls = _REGISTRY[name]
    if cls is UniformResolver:
        return UniformResolver(bytes.fromhex(arg) if arg else None)
    if arg:
        raise ValueError(f"resolver {name} takes no argument")
    return cls()
