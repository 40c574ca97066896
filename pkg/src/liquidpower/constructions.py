"""Executable forms of the simple-game definitions on elections.

Dummy, dictator and symmetry checks, minimal winning coalitions, unanimity
elections, composition of two elections, bloc formation, and checkers for the
five axioms (NP, MP, ET, BP, SP) and the three structural facts of the
delegative Banzhaf index.

All exact checks enumerate the delegative game's winning table, so they are
limited by the enumeration cap.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .core import (
    NULL_AGENT,
    AgentClass,
    Coalition,
    DelegationProfile,
    Lde,
    accrued,
    classify,
    full_coalition,
    members,
    restricted_accrued,
)
from .power import (
    DEFAULT_ENUMERATION_CAP,
    SimpleGame,
    TooLarge,
    banzhaf_exact,
    delegative_banzhaf,
    delegative_game,
    winning_table,
)

IndexFunction = Callable[[Lde, int], Union[Fraction, float]]

FLOAT_TOLERANCE = 1e-9


class IncompatibleOverlap(ValueError):
    """Two elections disagree on a shared agent beyond what composition allows."""


class NotBlocEligible(ValueError):
    pass


class PatternMismatch(ValueError):
    pass


class Mode(enum.Enum):
    AND = "and"
    OR = "or"


class Axiom(enum.Enum):
    NP = "NP"
    MP = "MP"
    ET = "ET"
    BP = "BP"
    SP = "SP"


class Fact(enum.Enum):
    DELEGATION_POWER_LOSS = "DelegationPowerLoss"
    POWER_MONOTONICITY = "PowerMonotonicity"
    DIRECT_VS_INDIRECT = "DirectVsIndirect"


@lru_cache(maxsize=2048)
def _table(lde: Lde, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    if lde.n > cap:
        raise TooLarge(f"{lde.n} agents exceeds the enumeration cap of {cap}")
    table = winning_table(delegative_game(lde), cap)
    table.setflags(write=False)
    return table


def _with_bit(n: int, i: int) -> np.ndarray:
    all_masks = np.arange(1 << n, dtype=np.intp)
    return all_masks[(all_masks >> i) & 1 == 1]


def is_dummy_exact(lde: Lde, i: int, cap: int = DEFAULT_ENUMERATION_CAP) -> bool:
    table = _table(lde, cap)
    with_i = _with_bit(lde.n, i)
    return bool(np.array_equal(table[with_i], table[with_i & ~(1 << i)]))


def is_dummy_fast(lde: Lde, i: int) -> bool:
    """Sufficient condition for dummyhood read off the delegation structure.

    Abstaining, cycle-bound and distant agents are always dummy. The converse
    fails for general weights (a light guru can be irrelevant to every
    winning coalition), so a ``False`` here does not rule dummyhood out.
    """
    return classify(lde, i) in (AgentClass.ABSTAINER, AgentClass.CYCLE_BOUND, AgentClass.DISTANT)


def is_dictator(lde: Lde, i: int, cap: int = DEFAULT_ENUMERATION_CAP) -> bool:
    if lde.profile.targets[i] == i and lde.quota <= lde.weights[i]:
        return True
    table = _table(lde, cap)
    contains = (np.arange(1 << lde.n) >> i) & 1 == 1
    return bool(np.array_equal(table, contains))


def are_symmetric(lde: Lde, i: int, j: int, cap: int = DEFAULT_ENUMERATION_CAP) -> bool:
    if i == j:
        return True
    table = _table(lde, cap)
    masks = np.arange(1 << lde.n, dtype=np.intp)
    rest = masks[((masks >> i) & 1 == 0) & ((masks >> j) & 1 == 0)]
    return bool(np.array_equal(table[rest | (1 << i)], table[rest | (1 << j)]))


def is_minimally_winning(lde: Lde, mask: Coalition) -> bool:
    """Winning, and losing after removing any agent accrued inside the coalition.

    Members outside the restricted accrual set are allowed, so such a
    coalition need not be minimal under set inclusion.
    """
    game = delegative_game(lde)
    if not game.winning(mask):
        return False
    for i in members(restricted_accrued(lde.profile, mask)):
        if game.winning(mask & ~(1 << i)):
            return False
    return True


def minimal_winning_coalitions(lde: Lde, cap: int = DEFAULT_ENUMERATION_CAP) -> list[Coalition]:
    if lde.n > cap:
        raise TooLarge(f"{lde.n} agents exceeds the enumeration cap of {cap}")
    table = _table(lde, cap)
    return [int(m) for m in np.flatnonzero(table) if is_minimally_winning(lde, int(m))]


def unanimity_quota(lde: Lde) -> Fraction:
    return lde.weight_of(accrued(lde.profile, full_coalition(lde.n)))


def is_unanimity(lde: Lde) -> bool:
    return lde.quota == unanimity_quota(lde)


# -- composition -----------------------------------------------------------


class CompositeGame(SimpleGame):
    """Conjunction or disjunction of two elections' delegative games.

    Players are the union of both label sets in ascending label order. A
    coalition wins iff its trace on each part wins there (``AND``) or on at
    least one part (``OR``). ``profile`` is the merged delegation profile over
    the union.
    """

    def __init__(self, v1: Lde, v2: Lde, mode: Mode, labels: tuple[int, ...], profile: DelegationProfile):
        self.parts = (v1, v2)
        self.mode = mode
        self.labels = labels
        self.n = len(labels)
        self.profile = profile
        pos = {lab: k for k, lab in enumerate(labels)}
        self._positions = tuple(
            np.array([pos[lab] for lab in v.agent_labels], dtype=np.uint64) for v in self.parts
        )
        self._games = tuple(delegative_game(v) for v in self.parts)

    def position(self, label: int) -> int:
        return self.labels.index(label)

    def _project(self, masks: np.ndarray, k: int) -> np.ndarray:
        local = np.zeros(masks.shape, dtype=np.uint64)
        for a, p in enumerate(self._positions[k]):
            local |= ((masks >> p) & np.uint64(1)) << np.uint64(a)
        return local

    def part_wins(self, masks: np.ndarray, k: int) -> np.ndarray:
        return self._games[k].wins(self._project(masks, k))

    def wins(self, masks: np.ndarray) -> np.ndarray:
        w1 = self.part_wins(masks, 0)
        w2 = self.part_wins(masks, 1)
        return (w1 & w2) if self.mode is Mode.AND else (w1 | w2)


def _label_target(v: Lde, i: int) -> Optional[int]:
    t = v.profile.targets[i]
    return None if t == NULL_AGENT else v.agent_labels[t]


def check_compatible(v1: Lde, v2: Lde) -> None:
    idx1 = {lab: k for k, lab in enumerate(v1.agent_labels)}
    idx2 = {lab: k for k, lab in enumerate(v2.agent_labels)}
    shared = idx1.keys() & idx2.keys()
    for lab in sorted(shared):
        a, b = idx1[lab], idx2[lab]
        if v1.weights[a] != v2.weights[b]:
            raise IncompatibleOverlap(f"agent {lab} has weight {v1.weights[a]} vs {v2.weights[b]}")
        t1, t2 = _label_target(v1, a), _label_target(v2, b)
        if t1 == t2:
            continue
        if t2 is None and t1 not in shared:
            continue
        if t1 is None and t2 not in shared:
            continue
        raise IncompatibleOverlap(f"agent {lab} delegates to {t1} vs {t2}")


def compose(v1: Lde, v2: Lde, mode: Mode) -> CompositeGame:
    mode = Mode(mode)
    check_compatible(v1, v2)
    labels = tuple(sorted(set(v1.agent_labels) | set(v2.agent_labels)))
    pos = {lab: k for k, lab in enumerate(labels)}
    targets = [NULL_AGENT] * len(labels)
    for v in (v1, v2):
        for i, lab in enumerate(v.agent_labels):
            t = _label_target(v, i)
            if t is not None:
                targets[pos[lab]] = pos[t]
    return CompositeGame(v1, v2, mode, labels, DelegationProfile(tuple(targets)))


# -- bloc formation --------------------------------------------------------


@dataclass(frozen=True)
class Bloc:
    lde: Lde
    bloc: int
    rename: dict


def form_bloc(lde: Lde, i: int, j: int) -> Bloc:
    """Merge ``i`` and ``j`` (``d_i = j``, or both gurus) into one agent.

    The bloc takes the smaller of the two indices; indices above the larger
    one shift down by one. ``rename`` maps every old index to its new index.
    """
    t = lde.profile.targets
    if i == j or not (t[i] == j or (t[i] == i and t[j] == j)):
        raise NotBlocEligible(f"agents {i} and {j} are neither adjacent nor both gurus")
    keep, gone = min(i, j), max(i, j)
    rename = {a: (a if a < gone else a - 1) for a in range(lde.n) if a != gone}
    rename[gone] = rename[keep]
    bloc = rename[keep]

    def remap(x: int) -> int:
        return NULL_AGENT if x == NULL_AGENT else rename[x]

    new_t = [NULL_AGENT] * (lde.n - 1)
    new_w = [Fraction(0)] * (lde.n - 1)
    for a in range(lde.n):
        if a in (i, j):
            continue
        new_t[rename[a]] = remap(t[a])
        new_w[rename[a]] = lde.weights[a]
    if t[i] == j:
        tj = t[j]
        if tj == j:
            new_t[bloc] = bloc
        elif tj == i:
            # i and j form a 2-cycle; the bloc stays cycle-bound (abstains).
            new_t[bloc] = NULL_AGENT
        else:
            new_t[bloc] = remap(tj)
    else:
        new_t[bloc] = bloc
    new_w[bloc] = lde.weights[i] + lde.weights[j]
    labels = None
    if lde.labels is not None:
        labels = [0] * (lde.n - 1)
        for a in range(lde.n):
            if a != gone:
                labels[rename[a]] = lde.labels[a]
    new = Lde(tuple(new_w), DelegationProfile(tuple(new_t)), lde.quota,
              None if labels is None else tuple(labels), lde.relaxed)
    return Bloc(new, bloc, rename)


def bloc_pairs(lde: Lde) -> Iterator[tuple[int, int]]:
    t = lde.profile.targets
    for i in range(lde.n):
        if t[i] != NULL_AGENT and t[i] != i:
            yield i, t[i]
    gurus = [i for i in range(lde.n) if t[i] == i]
    for a in range(len(gurus)):
        for b in range(a + 1, len(gurus)):
            yield gurus[a], gurus[b]


# -- axiom and fact checks -------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    holds: bool
    checked: int
    witness: Optional[str] = None

    def __bool__(self) -> bool:
        return self.holds


def _equal(a, b, tol: float) -> bool:
    if isinstance(a, Rational) and isinstance(b, Rational):
        return a == b
    return abs(float(a) - float(b)) <= tol


def _le(a, b, tol: float) -> bool:
    if isinstance(a, Rational) and isinstance(b, Rational):
        return a <= b
    return float(a) <= float(b) + tol


def db_index(lde: Lde, i: int) -> Fraction:
    return delegative_banzhaf(lde, i)


def _db_in(v: Lde, label: int, f: IndexFunction):
    labels = v.agent_labels
    return f(v, labels.index(label)) if label in labels else Fraction(0)


def composite_banzhaf(game: CompositeGame, label: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Fraction:
    return banzhaf_exact(game, game.position(label), cap)


def check_axiom(
    axiom: Union[Axiom, str],
    f: IndexFunction,
    instances: Iterable,
    tol: float = FLOAT_TOLERANCE,
    composite_index: Optional[Callable[[CompositeGame, int], Union[Fraction, float]]] = None,
) -> CheckResult:
    """Check one axiom for ``f`` on every eligible case of every instance.

    For ``SP`` each instance is a pair ``(v1, v2)``; ``composite_index``
    evaluates ``f`` on the composed games and defaults to the exact Banzhaf
    index of the composite game.
    """
    axiom = Axiom(axiom)
    checked = 0
    for inst in instances:
        if axiom is Axiom.SP:
            v1, v2 = inst
            g_and = compose(v1, v2, Mode.AND)
            g_or = compose(v1, v2, Mode.OR)
            ci = composite_index or composite_banzhaf
            for label in g_and.labels:
                lhs = ci(g_and, label) + ci(g_or, label)
                rhs = _db_in(v1, label, f) + _db_in(v2, label, f)
                checked += 1
                if not _equal(lhs, rhs, tol):
                    return CheckResult(False, checked, f"SP fails for agent {label}: {lhs} != {rhs} on {v1} / {v2}")
            continue
        lde = inst
        n = lde.n
        if axiom is Axiom.NP:
            for i in range(n):
                if is_dummy_exact(lde, i):
                    checked += 1
                    val = f(lde, i)
                    if not _equal(val, 0, tol):
                        return CheckResult(False, checked, f"dummy agent {i} has index {val} in {lde}")
        elif axiom is Axiom.MP:
            for i in range(n):
                if is_dictator(lde, i):
                    checked += 1
                    val = f(lde, i)
                    if not _equal(val, 1, tol):
                        return CheckResult(False, checked, f"dictator {i} has index {val} in {lde}")
        elif axiom is Axiom.ET:
            for i in range(n):
                for j in range(i + 1, n):
                    if are_symmetric(lde, i, j):
                        checked += 1
                        a, b = f(lde, i), f(lde, j)
                        if not _equal(a, b, tol):
                            return CheckResult(False, checked, f"symmetric {i},{j} have {a} != {b} in {lde}")
        elif axiom is Axiom.BP:
            for i, j in bloc_pairs(lde):
                b = form_bloc(lde, i, j)
                checked += 1
                lhs = f(b.lde, b.bloc)
                rhs = f(lde, i) + f(lde, j)
                if not _equal(lhs, rhs, tol):
                    return CheckResult(False, checked, f"bloc ({i},{j}) has {lhs} != {rhs} in {lde}")
    return CheckResult(True, checked)


def fact_patterns(fact: Union[Fact, str], lde: Lde) -> Iterator[tuple]:
    fact = Fact(fact)
    t = lde.profile.targets
    n = lde.n
    if fact is Fact.DELEGATION_POWER_LOSS:
        for i in range(n):
            if t[i] == i:
                for j in range(n):
                    if j != i:
                        yield (i, j)
    elif fact is Fact.POWER_MONOTONICITY:
        for i in range(n):
            if t[i] not in (i, NULL_AGENT):
                yield (i, t[i])
    else:
        for k in range(n):
            i = t[k]
            if i in (k, NULL_AGENT):
                continue
            j = t[i]
            if j in (i, k, NULL_AGENT):
                continue
            yield (i, j, k)


def _validate_pattern(fact: Fact, lde: Lde, pattern: tuple) -> None:
    t = lde.profile.targets
    ok = False
    if fact is Fact.DELEGATION_POWER_LOSS:
        i, j = pattern
        ok = t[i] == i and j != i and 0 <= j < lde.n
    elif fact is Fact.POWER_MONOTONICITY:
        i, j = pattern
        ok = i != j and t[i] == j
    else:
        i, j, k = pattern
        ok = len({i, j, k}) == 3 and t[i] == j and t[k] == i
    if not ok:
        raise PatternMismatch(f"{pattern} does not match the {fact.value} pattern")


def check_fact(
    fact: Union[Fact, str],
    lde: Lde,
    pattern: Optional[tuple] = None,
    f: IndexFunction = db_index,
    tol: float = FLOAT_TOLERANCE,
) -> CheckResult:
    """Verify a structural fact on one pattern, or on all patterns of ``lde``."""
    fact = Fact(fact)
    if pattern is not None:
        _validate_pattern(fact, lde, pattern)
        patterns: Sequence[tuple] = [pattern]
    else:
        patterns = list(fact_patterns(fact, lde))
    for checked, pat in enumerate(patterns, 1):
        if fact is Fact.DELEGATION_POWER_LOSS:
            i, j = pat
            after = lde.with_profile(lde.profile.with_target(i, j))
            before_v, after_v = f(lde, i), f(after, i)
            if not _le(after_v, before_v, tol):
                return CheckResult(False, checked, f"agent {i} gains {before_v} -> {after_v} delegating to {j} in {lde}")
        elif fact is Fact.POWER_MONOTONICITY:
            i, j = pat
            a, b = f(lde, i), f(lde, j)
            if not _le(a, b, tol):
                return CheckResult(False, checked, f"delegator {i} ({a}) exceeds trustee {j} ({b}) in {lde}")
        else:
            i, j, k = pat
            after = lde.with_profile(lde.profile.with_target(k, j))
            before_v, after_v = f(lde, k), f(after, k)
            if not _le(before_v, after_v, tol):
                return CheckResult(False, checked, f"agent {k} loses {before_v} -> {after_v} skipping {i} in {lde}")
    return CheckResult(True, len(patterns))


def constant_index(value) -> IndexFunction:
    def f(lde: Lde, i: int):
        return value

    return f


# -- random instances --------------------------------------------------------


def _random_quota(rng: np.random.Generator, total: Fraction) -> Fraction:
    # Half-integer grid over (total/2, total], which also hits fractional quotas.
    lo = math.floor(total) + 1
    hi = math.floor(2 * total)
    return Fraction(int(rng.integers(lo, hi + 1)), 2)


def random_lde(
    rng: np.random.Generator,
    n: int,
    max_weight: int = 3,
    abstain_prob: float = 0.1,
    labels: Optional[Sequence[int]] = None,
) -> Lde:
    """Random election: integer weights, uniform targets, some abstention."""
    weights = [int(w) for w in rng.integers(1, max_weight + 1, size=n)]
    targets = [NULL_AGENT if rng.random() < abstain_prob else int(rng.integers(n)) for _ in range(n)]
    total = Fraction(sum(weights))
    return Lde.build(targets, _random_quota(rng, total), weights, labels)


def random_compatible_pair(
    rng: np.random.Generator,
    max_n: int = 5,
    max_weight: int = 3,
) -> tuple[Lde, Lde]:
    """Two labelled elections whose delegations agree on their overlap."""
    n1 = int(rng.integers(1, max_n + 1))
    n2 = int(rng.integers(1, max_n + 1))
    s = int(rng.integers(0, min(n1, n2) + 1))
    a = list(range(n1))
    b = list(range(n1 - s, n1 - s + n2))
    shared = set(a) & set(b)
    weight = {lab: int(rng.integers(1, max_weight + 1)) for lab in set(a) | set(b)}
    t1: dict[int, Optional[int]] = {}
    t2: dict[int, Optional[int]] = {}
    for lab in sorted(shared):
        only_a = [x for x in a if x not in shared]
        only_b = [x for x in b if x not in shared]
        choice = int(rng.integers(3))
        if choice == 1 and only_a:
            t1[lab], t2[lab] = only_a[int(rng.integers(len(only_a)))], None
        elif choice == 2 and only_b:
            t1[lab], t2[lab] = None, only_b[int(rng.integers(len(only_b)))]
        else:
            pool = sorted(shared) + [None]
            t = pool[int(rng.integers(len(pool)))]
            t1[lab] = t2[lab] = t
    for labs, tmap in ((a, t1), (b, t2)):
        for lab in labs:
            if lab not in shared:
                pool = list(labs) + [None]
                tmap[lab] = pool[int(rng.integers(len(pool)))]

    def build(labs: list[int], tmap: dict[int, Optional[int]]) -> Lde:
        pos = {lab: k for k, lab in enumerate(labs)}
        targets = [NULL_AGENT if tmap[lab] is None else pos[tmap[lab]] for lab in labs]
        weights = [weight[lab] for lab in labs]
        return Lde.build(targets, _random_quota(rng, Fraction(sum(weights))), weights, labs)

    v1, v2 = build(a, t1), build(b, t2)
    check_compatible(v1, v2)
    return v1, v2
