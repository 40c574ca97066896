"""Simple games over elections and (delegative) Banzhaf computation.

Exact values are returned as :class:`~fractions.Fraction` with denominator
``2**(n-1)``. Enumeration is vectorized over ``uint64`` coalition masks, so
the exact routines need ``n <= 63``; the default cap of 30 agents keeps the
``2**(n-1)`` sweep tractable.

Monte-Carlo sampling uses numpy's Philox4x64 counter-based generator. The key
packs ``(seed, stream, agent)``: the low 64 bits hold the seed, the next 32
bits the agent and the top 32 bits a caller-chosen stream id. Sample ``s``
consumes raw word ``s`` of that keyed stream, so an estimate depends only on
``(seed, stream, agent, samples)``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Coalition, Lde, members

DEFAULT_ENUMERATION_CAP = 30
DEFAULT_SAMPLES = 15000
DEFAULT_CONFIDENCE = 0.95

_CHUNK = 1 << 18
_U64 = np.uint64


class TooLarge(ValueError):
    """Exact enumeration requested above the configured agent cap."""


class AgentNotInCoalition(ValueError):
    pass


class SimpleGame:
    """Winning predicate over coalitions of ``n`` players.

    Subclasses implement :meth:`wins`, a vectorized predicate over an array of
    ``uint64`` masks. :meth:`winning` is the scalar form.
    """

    n: int

    def wins(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def winning(self, mask: Coalition) -> bool:
        return bool(self.wins(np.array([mask], dtype=_U64))[0])


class PredicateGame(SimpleGame):
    """A simple game from an arbitrary scalar predicate (slow, for tests)."""

    def __init__(self, n: int, predicate: Callable[[int], bool]):
        self.n = n
        self.predicate = predicate

    def winning(self, mask: Coalition) -> bool:
        return bool(self.predicate(int(mask)))

    def wins(self, masks: np.ndarray) -> np.ndarray:
        return np.fromiter((self.predicate(int(m)) for m in masks), dtype=bool, count=len(masks))


class AccrualGame(SimpleGame):
    """Agent ``j`` contributes its weight when ``requirement[j]`` lies inside the coalition.

    With requirement = {guru} this is the guru game; with requirement = the
    whole chain from ``j`` to its guru it is the delegative game.
    """

    def __init__(self, requirements: Sequence[Optional[int]], weights: Sequence[int], quota: int):
        self.n = len(requirements)
        self.requirements = tuple(requirements)
        self.weights = tuple(int(w) for w in weights)
        self.quota = int(quota)
        self._active = [
            (_U64(r), w) for r, w in zip(self.requirements, self.weights) if r is not None
        ]

    def weight(self, mask: Coalition) -> int:
        return sum(
            w for r, w in zip(self.requirements, self.weights) if r is not None and r & mask == r
        )

    def winning(self, mask: Coalition) -> bool:
        return self.weight(mask) >= self.quota

    def weights_of(self, masks: np.ndarray) -> np.ndarray:
        total = np.zeros(masks.shape, dtype=np.int64)
        for r, w in self._active:
            total += w * ((masks & r) == r)
        return total

    def wins(self, masks: np.ndarray) -> np.ndarray:
        return self.weights_of(masks) >= self.quota


def guru_game(lde: Lde) -> AccrualGame:
    ints, quota = lde.integer_weights
    reqs = [None if g is None else 1 << g for g in lde.profile.gurus]
    return AccrualGame(reqs, ints, quota)


def delegative_game(lde: Lde) -> AccrualGame:
    ints, quota = lde.integer_weights
    return AccrualGame(lde.profile.chain_masks, ints, quota)


def is_swing(game: SimpleGame, i: int, mask: Coalition) -> bool:
    if not mask >> i & 1:
        raise AgentNotInCoalition(f"agent {i} is not in the coalition")
    return game.winning(mask) and not game.winning(mask & ~(1 << i))


@dataclass(frozen=True)
class SwingCount:
    count: int
    universe: int

    @property
    def index(self) -> Fraction:
        return Fraction(self.count, self.universe)


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise TooLarge(f"{n} agents exceeds the enumeration cap of {cap}")
    if n > 63:
        raise TooLarge("vectorized enumeration supports at most 63 agents")


def _masks_without(n: int, i: int, start: int, stop: int) -> np.ndarray:
    """Masks over the ``n-1`` agents other than ``i``, for ranks ``start..stop``."""
    r = np.arange(start, stop, dtype=_U64)
    low = _U64((1 << i) - 1)
    return (r & low) | ((r >> _U64(i)) << _U64(i + 1))


def swing_count(game: SimpleGame, i: int, cap: int = DEFAULT_ENUMERATION_CAP) -> SwingCount:
    n = game.n
    _check_cap(n, cap)
    universe = 1 << (n - 1)
    bit = _U64(1 << i)
    count = 0
    for start in range(0, universe, _CHUNK):
        masks = _masks_without(n, i, start, min(universe, start + _CHUNK))
        count += int(np.count_nonzero(game.wins(masks | bit) & ~game.wins(masks)))
    return SwingCount(count, universe)


def banzhaf_exact(game: SimpleGame, i: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Fraction:
    return swing_count(game, i, cap).index


def winning_table(game: SimpleGame, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """``table[m]`` is the game's verdict on coalition ``m`` for all ``2**n`` masks."""
    _check_cap(game.n, min(cap, 26))
    return game.wins(np.arange(1 << game.n, dtype=_U64))


def banzhaf_all(game: SimpleGame, cap: int = DEFAULT_ENUMERATION_CAP) -> list[Fraction]:
    n = game.n
    _check_cap(n, cap)
    if n == 0:
        return []
    if n > 22:
        return [banzhaf_exact(game, i, cap) for i in range(n)]
    table = winning_table(game, cap)
    universe = 1 << (n - 1)
    out = []
    for i in range(n):
        without = _masks_without(n, i, 0, universe).astype(np.intp)
        count = np.count_nonzero(table[without | (1 << i)] & ~table[without])
        out.append(Fraction(int(count), universe))
    return out


@lru_cache(maxsize=4096)
def delegative_banzhaf(lde: Lde, i: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Fraction:
    if lde.profile.gurus[i] is None:
        return Fraction(0)
    return banzhaf_exact(delegative_game(lde), i, cap)


@lru_cache(maxsize=1024)
def _delegative_all(lde: Lde, cap: int) -> tuple[Fraction, ...]:
    return tuple(banzhaf_all(delegative_game(lde), cap))


def delegative_banzhaf_all(lde: Lde, cap: int = DEFAULT_ENUMERATION_CAP) -> list[Fraction]:
    return list(_delegative_all(lde, cap))


# -- Monte Carlo -----------------------------------------------------------


def hoeffding_halfwidth(samples: int, confidence: float) -> float:
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * samples))


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    ci_halfwidth: float
    confidence: float
    samples: int
    seed: int
    swings: int = 0

    @property
    def interval(self) -> tuple[float, float]:
        return self.estimate - self.ci_halfwidth, self.estimate + self.ci_halfwidth


def _philox_key(seed: int, agent: int, stream: int) -> int:
    return (seed & 0xFFFFFFFFFFFFFFFF) | ((agent & 0xFFFFFFFF) << 64) | ((stream & 0xFFFFFFFF) << 96)


def sample_coalitions(n: int, i: int, samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """Uniform random subsets of ``N \\ {i}`` as ``uint64`` masks (``n <= 64``)."""
    if n > 64:
        raise TooLarge("bitmask sampling supports at most 64 agents")
    raw = np.random.Philox(key=_philox_key(seed, i, stream)).random_raw(samples)
    keep = ((1 << n) - 1) & ~(1 << i)
    return raw & _U64(keep)


def sample_members(n: int, i: int, samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """Boolean membership matrix ``(samples, n)`` for arbitrary ``n``."""
    words = (n + 63) // 64
    raw = np.random.Philox(key=_philox_key(seed, i, stream)).random_raw(samples * words)
    bits = np.unpackbits(raw.astype("<u8").view(np.uint8).reshape(samples, words * 8), axis=1, bitorder="little")
    out = bits[:, :n].astype(bool)
    out[:, i] = False
    return out


def _through(lde: Lde, i: int) -> list[int]:
    """Agents whose chain to the guru passes through ``i`` (including ``i``)."""
    return [j for j, c in enumerate(lde.profile.chains) if c is not None and i in c]


def _swings_bitmask(lde: Lde, i: int, masks: np.ndarray, base: Optional[np.ndarray] = None) -> int:
    """Count sampled coalitions (``i`` absent) for which ``i`` is swing.

    Agents whose chain avoids ``i`` contribute identically with and without
    ``i``; ``base`` is their accrued weight and may be supplied from a cache.
    """
    ints, quota = lde.integer_weights
    masks_i = masks | _U64(1 << i)
    if base is None:
        base = _base_weights(lde, i, masks)
    extra = np.zeros(masks.shape, dtype=np.int64)
    for j in _through(lde, i):
        r = _U64(lde.profile.chain_masks[j])
        extra += ints[j] * ((masks_i & r) == r)
    return int(np.count_nonzero((base < quota) & (base + extra >= quota)))


def _base_weights(lde: Lde, i: int, masks: np.ndarray) -> np.ndarray:
    ints, _ = lde.integer_weights
    base = np.zeros(masks.shape, dtype=np.int64)
    for j, cm in enumerate(lde.profile.chain_masks):
        if cm is None or cm >> i & 1:
            continue
        r = _U64(cm)
        base += ints[j] * ((masks & r) == r)
    return base


def _swings_matrix(lde: Lde, i: int, memb: np.ndarray) -> int:
    ints, quota = lde.integer_weights
    memb_i = memb.copy()
    memb_i[:, i] = True
    without = np.zeros(memb.shape[0], dtype=np.int64)
    with_i = np.zeros(memb.shape[0], dtype=np.int64)
    for j, chain in enumerate(lde.profile.chains):
        if chain is None:
            continue
        idx = list(chain)
        without += ints[j] * memb[:, idx].all(axis=1)
        with_i += ints[j] * memb_i[:, idx].all(axis=1)
    return int(np.count_nonzero((without < quota) & (with_i >= quota)))


def delegative_banzhaf_mc(
    lde: Lde,
    i: int,
    samples: int = DEFAULT_SAMPLES,
    confidence: float = DEFAULT_CONFIDENCE,
    seed: int = 0,
    stream: int = 0,
) -> McEstimate:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    half = hoeffding_halfwidth(samples, confidence)
    if lde.profile.gurus[i] is None:
        return McEstimate(0.0, half, confidence, samples, seed, 0)
    if lde.n <= 64:
        swings = _swings_bitmask(lde, i, sample_coalitions(lde.n, i, samples, seed, stream))
    else:
        swings = _swings_matrix(lde, i, sample_members(lde.n, i, samples, seed, stream))
    return McEstimate(swings / samples, half, confidence, samples, seed, swings)


# -- backends used by game dynamics ----------------------------------------


@dataclass
class ExactBackend:
    """Exact delegative Banzhaf by enumeration."""

    cap: int = DEFAULT_ENUMERATION_CAP

    @property
    def exact(self) -> bool:
        return True

    def db(self, lde: Lde, i: int, stream: int = 0) -> Fraction:
        return delegative_banzhaf(lde, i, self.cap)

    def db_all(self, lde: Lde, stream: int = 0) -> list[Fraction]:
        return delegative_banzhaf_all(lde, self.cap)


@dataclass
class MonteCarloBackend:
    """Sampled delegative Banzhaf with common random numbers per (agent, stream).

    Every profile evaluated for the same agent and stream sees the same
    coalitions, so utility comparisons inside one best-response step are not
    blurred by independent sampling noise.
    """

    samples: int = DEFAULT_SAMPLES
    confidence: float = DEFAULT_CONFIDENCE
    seed: int = 0
    _masks: "OrderedDict" = field(default_factory=OrderedDict, repr=False, compare=False)
    _bases: "OrderedDict" = field(default_factory=OrderedDict, repr=False, compare=False)
    _values: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def exact(self) -> bool:
        return False

    @property
    def ci_halfwidth(self) -> float:
        return hoeffding_halfwidth(self.samples, self.confidence)

    def _sampled(self, n: int, i: int, stream: int) -> np.ndarray:
        key = (n, i, stream)
        masks = self._masks.get(key)
        if masks is None:
            masks = sample_coalitions(n, i, self.samples, self.seed, stream)
            self._masks[key] = masks
            if len(self._masks) > 512:
                self._masks.popitem(last=False)
        return masks

    def db(self, lde: Lde, i: int, stream: int = 0) -> float:
        if lde.profile.gurus[i] is None:
            return 0.0
        vkey = (lde, i, stream)
        hit = self._values.get(vkey)
        if hit is not None:
            return hit
        if lde.n > 64:
            value = delegative_banzhaf_mc(lde, i, self.samples, self.confidence, self.seed, stream).estimate
        else:
            masks = self._sampled(lde.n, i, stream)
            bkey = (_outside_key(lde, i), i, stream)
            base = self._bases.get(bkey)
            if base is None:
                base = _base_weights(lde, i, masks)
                self._bases[bkey] = base
                if len(self._bases) > 256:
                    self._bases.popitem(last=False)
            value = _swings_bitmask(lde, i, masks, base) / self.samples
        if len(self._values) > 20_000:
            self._values.clear()
        self._values[vkey] = value
        return value

    def db_all(self, lde: Lde, stream: int = 0) -> list[float]:
        return [self.db(lde, i, stream) for i in range(lde.n)]


def _outside_key(lde: Lde, i: int) -> tuple:
    """Identify the part of the election that ``_base_weights`` depends on.

    The base weight only involves agents whose forward path never meets ``i``;
    their chains are fixed by their own targets, independent of where ``i`` and
    its upstream delegators point.
    """
    targets = lde.profile.targets
    upstream = _upstream(targets, i)
    masked = tuple(-2 if j in upstream else t for j, t in enumerate(targets))
    return (masked, lde.weights, lde.quota)


def _upstream(targets: tuple[int, ...], i: int) -> set[int]:
    """``i`` plus every agent whose forward path reaches ``i``."""
    n = len(targets)
    reaches = {i}
    for j in range(n):
        path = []
        a = j
        seen = set()
        while a >= 0 and a not in seen and a not in reaches:
            seen.add(a)
            path.append(a)
            t = targets[a]
            if t == a:
                break
            a = t
        if a in reaches:
            reaches.update(path)
    return reaches


PowerBackend = Union[ExactBackend, MonteCarloBackend]
