"""Leakage-indistinguishability games.

A challenger evaluates two attacker-chosen inputs with fresh coins and hands
over the two leakage patterns in an order fixed by a hidden bit; the attacker
guesses the bit. The advantage is |wins/T - 1/2| with a Wilson interval.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from statsmodels.stats.proportion import proportion_confint

from .errors import ConfigurationError, RangeError
from .evaluator import EvalResult, evaluate, required_capacity
from .graph import DynamicGraphSpec
from .labeling import Oracle
from .memory import TieredMemory
from .rng import as_seed, derive

EVALUATORS = {"full": "keyed", "hybrid": "random", "noshuffle": "identity"}

# adversarial corpus of input pairs: extremes and a one-bit difference
INPUT_CORPUS = (
    (b"\x00" * 16, b"\xff" * 16),
    (b"\x00" * 16, b"\x00" * 15 + b"\x01"),
    (b"\xff" * 16, b"\x7f" + b"\xff" * 15),
)


@dataclass(frozen=True)
class GameConfig:
    trials: int
    lam: int = 128
    mode: str = "single"
    rounds: int = 1
    evaluator: str = "full"
    cache_capacity: int | None = None
    policy: str = "lru"
    show_rounds: bool = True
    seed: bytes = b""
    time_budget: float | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise RangeError("trials must be >= 1")
        if self.mode not in ("single", "adaptive"):
            raise RangeError("mode must be 'single' or 'adaptive'")
        if self.rounds < 1 or (self.mode == "single" and self.rounds != 1):
            raise RangeError("single mode has exactly one round; adaptive needs rounds >= 1")
        if self.evaluator not in EVALUATORS:
            raise RangeError(f"evaluator must be one of {sorted(EVALUATORS)}")
        if self.lam < 8 or self.lam % 8:
            raise RangeError("lambda must be a positive multiple of 8")
        object.__setattr__(self, "seed", as_seed(self.seed))


class GameContext:
    """Public information: graph, oracle, memory geometry, evaluator code.

    ``simulate`` runs the evaluator with the identity key, which needs no
    secret and is what a matching attacker compares against.
    """

    def __init__(self, spec: DynamicGraphSpec, oracle: Oracle, config: GameConfig):
        self.spec = spec
        self.oracle = oracle
        self.config = config
        self.capacity = config.cache_capacity or required_capacity(spec)
        self._sims: dict[bytes, EvalResult] = {}

    def new_memory(self) -> TieredMemory:
        return TieredMemory(self.capacity, self.config.policy, self.oracle.width)

    def run(self, x: bytes, coins: bytes, permutation: str) -> EvalResult:
        return evaluate(self.spec, self.oracle, x, coins, self.new_memory(), permutation)

    def view(self, res: EvalResult) -> tuple:
        return res.leakage.project(self.config.show_rounds)

    def simulate(self, x: bytes) -> EvalResult:
        res = self._sims.get(x)
        if res is None:
            res = self._sims[x] = self.run(x, b"", "identity")
        return res

    def walk_offset(self) -> int:
        """Index of the first walk-phase event; fixed for every input and key."""
        sim = self.simulate(INPUT_CORPUS[0][0])
        first = sim.phase_rounds("walk")[0]
        return next(t for t, e in enumerate(sim.leakage.events) if e.round >= first)


@dataclass
class GameTranscript:
    b: int
    rounds: list = field(default_factory=list)  # (x0, x1, digest of first lp, digest of second lp)
    guess: int | None = None

    def digest(self) -> str:
        h = hashlib.sha256(bytes([self.b, 255 if self.guess is None else self.guess]))
        for x0, x1, d0, d1 in self.rounds:
            h.update(x0 + b"|" + x1 + b"|" + d0.encode() + d1.encode())
        return h.hexdigest()


def _lp_digest(view: tuple) -> str:
    return hashlib.sha256(repr(view).encode()).hexdigest()[:16]


# -- attackers ------------------------------------------------------------------------


class Attacker:
    """Per game: ``start``, then per round ``choose`` and ``observe``, then ``guess``."""

    name = "base"

    def __init__(self, seed=b""):
        self.seed = as_seed(seed)

    def start(self, ctx: GameContext, x0: bytes | None = None, x1: bytes | None = None) -> None:
        self.ctx = ctx
        self.fixed = (x0, x1) if x0 is not None else None
        self.votes: list[int] = []
        self.seen: list[bytes] = []

    def choose(self, round_index: int) -> tuple[bytes, bytes]:
        if self.fixed is not None:
            return self.fixed
        return INPUT_CORPUS[round_index % len(INPUT_CORPUS)]

    def observe(self, x0: bytes, x1: bytes, first: tuple, second: tuple) -> None:
        self.seen.append(_lp_digest(first).encode() + _lp_digest(second).encode())
        v = self.vote(x0, x1, first, second)
        if v is not None:
            self.votes.append(v)

    def vote(self, x0: bytes, x1: bytes, first: tuple, second: tuple) -> int | None:
        return None

    def guess(self) -> int:
        ones = sum(self.votes)
        zeros = len(self.votes) - ones
        if ones != zeros:
            return int(ones > zeros)
        # tie: a coin that is a pure function of this attacker's seed and view
        return derive(self.seed, "tie", *self.seen)[0] & 1


class CoinFlip(Attacker):
    name = "coin"


class ExactMatcher(Attacker):
    """Replays the evaluator with the identity key and compares whole traces."""

    name = "exact"

    def vote(self, x0, x1, first, second):
        s0 = self.ctx.view(self.ctx.simulate(x0))
        s1 = self.ctx.view(self.ctx.simulate(x1))
        if s0 == s1:
            return None
        if first == s0 or second == s1:
            return 0
        if first == s1 or second == s0:
            return 1
        return None


def _events(view: tuple):
    # projections are (kind, addr, size[, round]) tuples
    return [(e[0], e[1]) for e in view]


class _FeatureMatcher(Attacker):
    def feature(self, view: tuple) -> tuple:
        raise NotImplementedError

    def vote(self, x0, x1, first, second):
        f0 = self.feature(self.ctx.view(self.ctx.simulate(x0)))
        f1 = self.feature(self.ctx.view(self.ctx.simulate(x1)))
        a, b = self.feature(first), self.feature(second)
        score = _agree(a, f0) + _agree(b, f1) - _agree(a, f1) - _agree(b, f0)
        if score > 0:
            return 0
        if score < 0:
            return 1
        return None


def _agree(u: tuple, v: tuple) -> int:
    return sum(1 for p, q in zip(u, v) if p == q)


class FirstAccessMatcher(_FeatureMatcher):
    """Per block, where inside the block the walk's first request lands."""

    name = "histogram"

    def feature(self, view):
        spec = self.ctx.spec
        groups = spec.groups()
        starts = [spec.potential_parents(gr[0]) for gr in groups]
        owner = {a: (j, pos) for j, blk in enumerate(starts) for pos, a in enumerate(blk)}
        first: dict[int, int] = {}
        for kind, addr in _events(view[self.ctx.walk_offset():]):
            if kind == "R" and addr in owner:
                j, pos = owner[addr]
                first.setdefault(j, pos)
        return tuple(first.get(j, -1) for j in range(len(starts)))


class CollisionMatcher(_FeatureMatcher):
    """Positions in the walk's request stream that repeat an earlier address."""

    name = "collision"

    def feature(self, view):
        seen: set[int] = set()
        rep = []
        reqs = [a for k, a in _events(view[self.ctx.walk_offset():]) if k == "R"]
        for t, a in enumerate(reqs):
            if a in seen:
                rep.append(t)
            seen.add(a)
        return (tuple(rep),)


ATTACKERS = {cls.name: cls for cls in (CoinFlip, ExactMatcher, FirstAccessMatcher, CollisionMatcher)}
ATTACKERS["simulate-and-match"] = ExactMatcher


def builtin_attackers(seed=b"") -> list[Attacker]:
    return [cls(seed) for cls in (CoinFlip, ExactMatcher, FirstAccessMatcher, CollisionMatcher)]


def attacker_by_name(name: str, seed=b"") -> Attacker:
    try:
        return ATTACKERS[name](seed)
    except KeyError:
        raise RangeError(f"unknown attacker {name!r}; choose from {sorted(ATTACKERS)}") from None


# -- estimation -------------------------------------------------------------------------


@dataclass(frozen=True)
class AdvantageEstimate:
    wins: int
    trials: int
    win_ci: tuple[float, float]
    method: str = "wilson"
    level: float = 0.95

    @property
    def advantage(self) -> float:
        return abs(self.wins / self.trials - 0.5)

    @property
    def advantage_ci(self) -> tuple[float, float]:
        lo, hi = self.win_ci
        top = max(abs(lo - 0.5), abs(hi - 0.5))
        bottom = 0.0 if lo <= 0.5 <= hi else min(abs(lo - 0.5), abs(hi - 0.5))
        return bottom, top

    @property
    def ci_width(self) -> float:
        return self.win_ci[1] - self.win_ci[0]


def estimate(wins: int, trials: int, level: float = 0.95) -> AdvantageEstimate:
    lo, hi = proportion_confint(wins, trials, alpha=1 - level, method="wilson")
    return AdvantageEstimate(wins, trials, (float(lo), float(hi)), "wilson", level)


@dataclass
class GameResult:
    estimate: AdvantageEstimate
    transcripts: list[GameTranscript]
    coins: list[bytes]

    def transcript_digest(self) -> str:
        h = hashlib.sha256()
        for t in self.transcripts:
            h.update(t.digest().encode())
        return h.hexdigest()


def _trial(ctx: GameContext, attacker: Attacker, t: int, x0: bytes | None, x1: bytes | None) -> tuple[bool, GameTranscript, list[bytes]]:
    cfg = ctx.config
    b = derive(cfg.seed, "b", t)[0] & 1
    tr = GameTranscript(b)
    coins_used: list[bytes] = []
    perm = EVALUATORS[cfg.evaluator]
    try:
        start = time.monotonic()
        attacker.start(ctx, x0, x1)
        for i in range(cfg.rounds):
            a0, a1 = attacker.choose(i)
            if a0 == a1:
                raise ValueError("challenge inputs must differ")
            c0 = derive(cfg.seed, "coins", t, i, 0)[: cfg.lam // 8]
            c1 = derive(cfg.seed, "coins", t, i, 1)[: cfg.lam // 8]
            coins_used += [c0, c1]
            lp = [ctx.view(ctx.run(a0, c0, perm)), ctx.view(ctx.run(a1, c1, perm))]
            first, second = lp[b], lp[1 - b]
            tr.rounds.append((a0, a1, _lp_digest(first), _lp_digest(second)))
            attacker.observe(a0, a1, first, second)
        guess = attacker.guess()
        if cfg.time_budget is not None and time.monotonic() - start > cfg.time_budget:
            guess = None
    except Exception:
        # a crashing attacker forfeits the trial
        guess = None
    tr.guess = guess
    return guess == b, tr, coins_used


def _run_chunk(args) -> list:
    spec, oracle, config, attacker, ts, x0, x1 = args
    ctx = GameContext(spec, oracle, config)
    return [_trial(ctx, attacker, t, x0, x1) for t in ts]


def _play(spec, oracle, config, attacker, x0, x1, jobs: int) -> GameResult:
    trials = range(config.trials)
    if jobs > 1:
        chunks = [list(trials[i::jobs]) for i in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_run_chunk, [(spec, oracle, config, attacker, c, x0, x1) for c in chunks]))
        by_t = {}
        for c, part in zip(chunks, parts):
            by_t.update(zip(c, part))
        rows = [by_t[t] for t in trials]
    else:
        rows = _run_chunk((spec, oracle, config, attacker, list(trials), x0, x1))
    coins = [c for _, _, cs in rows for c in cs]
    if len(set(coins)) != len(coins):
        raise ConfigurationError("challenger reused coins")
    wins = sum(1 for w, _, _ in rows if w)
    return GameResult(estimate(wins, config.trials), [tr for _, tr, _ in rows], coins)


def run_single(config: GameConfig, attacker: Attacker, x0: bytes, x1: bytes, spec: DynamicGraphSpec, oracle: Oracle | None = None, jobs: int = 1) -> GameResult:
    if config.mode != "single":
        raise RangeError("run_single needs mode='single'")
    if x0 == x1:
        raise RangeError("challenge inputs must differ")
    return _play(spec, oracle or Oracle(), config, attacker, x0, x1, jobs)


def run_adaptive(config: GameConfig, attacker: Attacker, spec: DynamicGraphSpec, oracle: Oracle | None = None, jobs: int = 1) -> GameResult:
    if config.mode != "adaptive":
        raise RangeError("run_adaptive needs mode='adaptive'")
    return _play(spec, oracle or Oracle(), config, attacker, None, None, jobs)


def default_inputs() -> Sequence[bytes]:
    return INPUT_CORPUS[0]
