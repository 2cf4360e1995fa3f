"""Two-tier memory: a small fully associative cache in front of RAM.

Write-back, write-allocate, one label per line. Every transfer between the
tiers is logged as an ``AccessEvent``; that log is the leakage an observer
of the memory bus would see. Events carry no payload by construction.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import ConfigurationError, MemoryFault, ParseError, RangeError

POLICIES = ("lru", "fifo")


class AccessEvent(NamedTuple):
    kind: str  # "R": line fetched from RAM, "S": dirty line written to RAM
    address: int
    size: int
    round: int


@dataclass(frozen=True)
class LeakagePattern:
    events: tuple[AccessEvent, ...]
    label_width: int
    cache_capacity: int
    policy: str

    def requests(self) -> list[AccessEvent]:
        return [e for e in self.events if e.kind == "R"]

    def stores(self) -> list[AccessEvent]:
        return [e for e in self.events if e.kind == "S"]

    def project(self, with_rounds: bool = True) -> tuple:
        """What an observer sees, optionally without round boundaries."""
        if with_rounds:
            return tuple(self.events)
        return tuple((e.kind, e.address, e.size) for e in self.events)

    def window(self, first_round: int, last_round: int) -> list[AccessEvent]:
        return [e for e in self.events if first_round <= e.round <= last_round]

    def serialize(self) -> str:
        head = f"trace v1 {self.label_width} {self.cache_capacity} {self.policy}\n"
        return head + "".join(f"{e.kind} {e.address} {e.size} {e.round}\n" for e in self.events)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    @classmethod
    def parse(cls, text: str) -> "LeakagePattern":
        lines = text.splitlines()
        if not lines:
            raise ParseError("empty trace", 1)
        head = lines[0].split()
        if len(head) != 5 or head[:2] != ["trace", "v1"] or head[4] not in POLICIES:
            raise ParseError(f"bad trace header {lines[0]!r}", 1)
        try:
            width, cap = int(head[2]), int(head[3])
        except ValueError:
            raise ParseError(f"bad trace header {lines[0]!r}", 1) from None
        events = []
        for no, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            if len(parts) != 4 or parts[0] not in ("R", "S"):
                raise ParseError(f"bad event {ln!r}", no)
            try:
                events.append(AccessEvent(parts[0], int(parts[1]), int(parts[2]), int(parts[3])))
            except ValueError:
                raise ParseError(f"bad event {ln!r}", no) from None
        return cls(tuple(events), width, cap, head[4])


class TieredMemory:
    def __init__(self, capacity: int, policy: str = "lru", label_width: int = 256):
        if capacity < 1:
            raise ConfigurationError("cache capacity must be at least one line")
        if policy not in POLICIES:
            raise ConfigurationError(f"policy must be one of {POLICIES}")
        if label_width % 8:
            raise RangeError("label width must be whole bytes")
        self.capacity = capacity
        self.policy = policy
        self.width = label_width
        self._nbytes = label_width // 8
        self._ram: dict[int, bytes] = {}
        # addr -> [label, dirty]; order is eviction order (front goes first)
        self._cache: OrderedDict[int, list] = OrderedDict()
        self._events: list[AccessEvent] = []
        self._lru = policy == "lru"
        self.round = 0

    def begin_round(self) -> int:
        self.round += 1
        return self.round

    def cached(self, addr: int) -> bool:
        return addr in self._cache

    def load(self, addr: int) -> bytes:
        cache = self._cache
        line = cache.get(addr)
        if line is not None:
            if self._lru:
                cache.move_to_end(addr)
            return line[0]
        try:
            label = self._ram[addr]
        except KeyError:
            raise MemoryFault(f"read of uninitialised address {addr}") from None
        self._events.append(AccessEvent("R", addr, self.width, self.round))
        self._install(addr, label, False)
        return label

    def store(self, addr: int, label: bytes) -> None:
        if len(label) != self._nbytes:
            raise MemoryFault(f"label of {len(label)} bytes, expected {self._nbytes}")
        cache = self._cache
        line = cache.get(addr)
        if line is not None:
            line[0] = label
            line[1] = True
            if self._lru:
                cache.move_to_end(addr)
            return
        self._install(addr, label, True)

    def _install(self, addr: int, label: bytes, dirty: bool) -> None:
        cache = self._cache
        # the capacity invariant means one eviction always suffices
        if len(cache) >= self.capacity:
            old, (lab, was_dirty) = cache.popitem(last=False)
            if was_dirty:
                self._events.append(AccessEvent("S", old, self.width, self.round))
                self._ram[old] = lab
        cache[addr] = [label, dirty]

    def flush(self, addrs: Iterable[int]) -> None:
        """Write back the dirty lines among ``addrs``, ascending; lines stay cached."""
        for a in sorted(addrs):
            line = self._cache.get(a)
            if line is not None and line[1]:
                self._events.append(AccessEvent("S", a, self.width, self.round))
                self._ram[a] = line[0]
                line[1] = False

    def flush_block_ascending(self, lo: int, hi: int) -> None:
        self.flush(range(lo, hi + 1))

    def flush_all(self) -> None:
        self.flush(list(self._cache))

    def fresh(self) -> bool:
        return self.round == 0 and not self._ram and not self._cache

    def snapshot(self) -> tuple:
        return (dict(self._ram), [(a, list(line)) for a, line in self._cache.items()], list(self._events), self.round)

    def restore(self, snap: tuple) -> None:
        ram, cache, events, rnd = snap
        self._ram = dict(ram)
        self._cache = OrderedDict((a, list(line)) for a, line in cache)
        self._events = list(events)
        self.round = rnd

    def ram_view(self) -> dict[int, bytes]:
        return dict(self._ram)

    def leakage(self) -> LeakagePattern:
        return LeakagePattern(tuple(self._events), self.width, self.capacity, self.policy)
