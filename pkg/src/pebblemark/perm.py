"""Tweakable keyed permutations over [1..m].

``KeyedPerm`` shuffles with Fisher-Yates driven by a PRG seeded from
HMAC(key, tweak); tables are cached per tweak so enc/dec are O(1) after the
first call. ``LazyRandomPerm`` samples a truly random permutation point by
point and stands in for the ideal object in hybrid experiments.
"""

from __future__ import annotations

import random

from .errors import RangeError
from .rng import derive


class KeyedPerm:
    def __init__(self, key: bytes, m: int):
        if m < 1:
            raise RangeError("permutation domain must be non-empty")
        self.key = key
        self.m = m
        self._fwd: dict = {}
        self._inv: dict = {}

    def _table(self, tweak) -> list[int]:
        t = self._fwd.get(tweak)
        if t is None:
            rng = random.Random(int.from_bytes(derive(self.key, "perm", tweak), "big"))
            t = list(range(1, self.m + 1))
            rng.shuffle(t)
            inv = [0] * self.m
            for p, q in enumerate(t, start=1):
                inv[q - 1] = p
            self._fwd[tweak] = t
            self._inv[tweak] = inv
        return t

    def enc(self, tweak, p: int) -> int:
        if not 1 <= p <= self.m:
            raise RangeError(f"{p} outside [1, {self.m}]")
        return self._table(tweak)[p - 1]

    def dec(self, tweak, q: int) -> int:
        if not 1 <= q <= self.m:
            raise RangeError(f"{q} outside [1, {self.m}]")
        self._table(tweak)
        return self._inv[tweak][q - 1]


class IdentityPerm(KeyedPerm):
    """Ablation: every tweak maps p to itself."""

    def __init__(self, m: int):
        super().__init__(b"", m)

    def _table(self, tweak) -> list[int]:
        t = self._fwd.get(tweak)
        if t is None:
            t = list(range(1, self.m + 1))
            self._fwd[tweak] = t
            self._inv[tweak] = t
        return t


class LazyRandomPerm:
    """Random permutation per tweak, sampled lazily without replacement."""

    def __init__(self, seed: bytes, m: int):
        if m < 1:
            raise RangeError("permutation domain must be non-empty")
        self.m = m
        self._rng = random.Random(int.from_bytes(derive(seed, "lazy-perm"), "big"))
        self._fwd: dict = {}
        self._free: dict = {}

    def enc(self, tweak, p: int) -> int:
        if not 1 <= p <= self.m:
            raise RangeError(f"{p} outside [1, {self.m}]")
        fwd = self._fwd.setdefault(tweak, {})
        q = fwd.get(p)
        if q is None:
            free = self._free.setdefault(tweak, list(range(1, self.m + 1)))
            idx = self._rng.randrange(len(free))
            free[idx], free[-1] = free[-1], free[idx]
            q = free.pop()
            fwd[p] = q
        return q

    def dec(self, tweak, q: int) -> int:
        # inverse queries force the whole table; only used in tests
        for p in range(1, self.m + 1):
            if self.enc(tweak, p) == q:
                return p
        raise RangeError(f"{q} outside [1, {self.m}]")
