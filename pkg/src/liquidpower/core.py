"""Liquid-democracy elections and structural queries on delegation graphs.

Agents are dense indices ``0..n-1``. A delegation profile maps every agent to
another agent, to itself (a guru) or to :data:`NULL_AGENT` (abstention).
Coalitions are plain Python ``int`` bitmasks: bit ``i`` set means agent ``i``
is a member. Python integers are unbounded, so the same representation covers
any number of agents.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Optional, Sequence

NULL_AGENT = -1

Coalition = int


class NoChain(ValueError):
    """Raised when no delegation chain links the two queried agents."""


class InvalidElection(ValueError):
    pass


def coalition(members: Iterable[int]) -> Coalition:
    mask = 0
    for i in members:
        mask |= 1 << i
    return mask


def members(mask: Coalition) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def full_coalition(n: int) -> Coalition:
    return (1 << n) - 1


class AgentClass(enum.Enum):
    GURU = "guru"
    DELEGATOR = "delegator"
    ABSTAINER = "abstainer"
    CYCLE_BOUND = "cycle-bound"
    DISTANT = "distant"


@dataclass(frozen=True)
class DelegationProfile:
    """Total map agent -> target. ``targets[i] == i`` marks a guru."""

    targets: tuple[int, ...]

    def __post_init__(self) -> None:
        targets = tuple(int(t) for t in self.targets)
        n = len(targets)
        for i, t in enumerate(targets):
            if t != NULL_AGENT and not 0 <= t < n:
                raise InvalidElection(f"agent {i} delegates to unknown agent {t}")
        object.__setattr__(self, "targets", targets)

    @classmethod
    def trivial(cls, n: int) -> DelegationProfile:
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.targets)

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i: int) -> int:
        return self.targets[i]

    def with_target(self, i: int, target: int) -> DelegationProfile:
        t = list(self.targets)
        t[i] = target
        return DelegationProfile(tuple(t))

    def is_trivial(self) -> bool:
        return all(t == i for i, t in enumerate(self.targets))

    @cached_property
    def gurus(self) -> tuple[Optional[int], ...]:
        """Guru of every agent, ``None`` where the chain abstains or cycles."""
        n = self.n
        result: list[Optional[int]] = [None] * n
        resolved = [False] * n
        for start in range(n):
            if resolved[start]:
                continue
            path = []
            on_path = set()
            a = start
            guru: Optional[int] = None
            while True:
                if resolved[a]:
                    guru = result[a]
                    break
                t = self.targets[a]
                if t == a:
                    guru = a
                    path.append(a)
                    break
                if t == NULL_AGENT or a in on_path:
                    guru = None
                    if a not in on_path:
                        path.append(a)
                    break
                path.append(a)
                on_path.add(a)
                a = t
            for b in path:
                result[b] = guru
                resolved[b] = True
        return tuple(result)

    @cached_property
    def chains(self) -> tuple[Optional[tuple[int, ...]], ...]:
        """Ordered chain ``(i, ..., guru)`` for every agent that has a guru."""
        out: list[Optional[tuple[int, ...]]] = []
        for i in range(self.n):
            if self.gurus[i] is None:
                out.append(None)
                continue
            chain = [i]
            while self.targets[chain[-1]] != chain[-1]:
                chain.append(self.targets[chain[-1]])
            out.append(tuple(chain))
        return tuple(out)

    @cached_property
    def chain_masks(self) -> tuple[Optional[int], ...]:
        return tuple(None if c is None else coalition(c) for c in self.chains)

    @cached_property
    def hops(self) -> tuple[Optional[int], ...]:
        """Number of delegation hops to the guru (0 for gurus)."""
        return tuple(None if c is None else len(c) - 1 for c in self.chains)

    def guru_set(self) -> Coalition:
        return coalition(i for i, t in enumerate(self.targets) if t == i)


@dataclass(frozen=True)
class Lde:
    """A liquid democracy election: weights, delegation profile and quota.

    ``labels`` optionally names each agent in a global universe; it is only
    consulted when two elections are composed.
    """

    weights: tuple[Fraction, ...]
    profile: DelegationProfile
    quota: Fraction
    labels: Optional[tuple[int, ...]] = None
    relaxed: bool = False

    def __post_init__(self) -> None:
        weights = tuple(Fraction(w) for w in self.weights)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "quota", Fraction(self.quota))
        if len(weights) != self.profile.n:
            raise InvalidElection("weights and profile disagree on the number of agents")
        if any(w <= 0 for w in weights):
            raise InvalidElection("weights must be strictly positive")
        if self.labels is not None:
            labels = tuple(int(x) for x in self.labels)
            if len(labels) != len(weights) or len(set(labels)) != len(labels):
                raise InvalidElection("labels must be distinct, one per agent")
            object.__setattr__(self, "labels", labels)
        total = sum(weights, Fraction(0))
        if self.quota <= 0:
            raise InvalidElection("quota must be positive")
        if not self.relaxed and not (total / 2 < self.quota <= total):
            raise InvalidElection(f"quota {self.quota} outside ({total / 2}, {total}]")

    @classmethod
    def build(
        cls,
        targets: Sequence[int],
        quota,
        weights: Optional[Sequence] = None,
        labels: Optional[Sequence[int]] = None,
        relaxed: bool = False,
    ) -> Lde:
        n = len(targets)
        if weights is None:
            weights = [1] * n
        return cls(
            tuple(Fraction(w) for w in weights),
            DelegationProfile(tuple(targets)),
            Fraction(quota),
            None if labels is None else tuple(labels),
            relaxed,
        )

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def total_weight(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    @property
    def agent_labels(self) -> tuple[int, ...]:
        return self.labels if self.labels is not None else tuple(range(self.n))

    def with_profile(self, profile: DelegationProfile) -> Lde:
        return Lde(self.weights, profile, self.quota, self.labels, self.relaxed)

    def with_quota(self, quota, relaxed: Optional[bool] = None) -> Lde:
        return Lde(
            self.weights,
            self.profile,
            Fraction(quota),
            self.labels,
            self.relaxed if relaxed is None else relaxed,
        )

    def weight_of(self, mask: Coalition) -> Fraction:
        return sum((self.weights[i] for i in members(mask)), Fraction(0))

    @cached_property
    def integer_weights(self) -> tuple[tuple[int, ...], int]:
        """Weights and quota scaled to integers with identical ``>=`` outcomes."""
        scale = 1
        for w in self.weights:
            scale = scale * w.denominator // math.gcd(scale, w.denominator)
        ints = tuple(int(w * scale) for w in self.weights)
        return ints, math.ceil(self.quota * scale)


def guru_of(profile: DelegationProfile, i: int) -> Optional[int]:
    return profile.gurus[i]


def _walk(profile: DelegationProfile, i: int, j: int) -> list[int]:
    """Agents visited from ``i`` up to and including ``j``."""
    path = [i]
    a = i
    for _ in range(profile.n):
        if a == j:
            return path
        t = profile.targets[a]
        if t == NULL_AGENT or t == a:
            break
        a = t
        path.append(a)
    if a == j:
        return path
    raise NoChain(f"no delegation chain from {i} to {j}")


def intermediaries(profile: DelegationProfile, i: int, j: int) -> frozenset[int]:
    path = _walk(profile, i, j)
    return frozenset(path[1:-1])


def delegation_distance(lde: Lde, i: int, j: int) -> Fraction:
    path = _walk(lde.profile, i, j)
    if len(path) == 1:
        return lde.weights[j]
    return sum((lde.weights[a] for a in path[1:]), Fraction(0))


def accrued(profile: DelegationProfile, mask: Coalition) -> Coalition:
    """Agents whose guru lies in ``mask``, whatever the intermediaries."""
    out = 0
    for j, g in enumerate(profile.gurus):
        if g is not None and mask >> g & 1:
            out |= 1 << j
    return out


def restricted_accrued(profile: DelegationProfile, mask: Coalition) -> Coalition:
    """Agents linked to a guru in ``mask`` through a chain lying inside ``mask``."""
    out = 0
    for j, cm in enumerate(profile.chain_masks):
        if cm is not None and cm & mask == cm:
            out |= 1 << j
    return out


def restrict(profile: DelegationProfile, mask: Coalition) -> DelegationProfile:
    return DelegationProfile(
        tuple(
            t if (mask >> i & 1) and t != NULL_AGENT and (mask >> t & 1) else NULL_AGENT
            for i, t in enumerate(profile.targets)
        )
    )


def classify(lde: Lde, i: int) -> AgentClass:
    profile = lde.profile
    if profile.targets[i] == NULL_AGENT:
        return AgentClass.ABSTAINER
    guru = profile.gurus[i]
    if guru is None:
        # Chain ends in a cycle, or runs into an abstaining agent.
        if _reaches_abstainer(profile, i):
            return AgentClass.ABSTAINER
        return AgentClass.CYCLE_BOUND
    if guru == i:
        return AgentClass.GURU
    if delegation_distance(lde, i, guru) >= lde.quota:
        return AgentClass.DISTANT
    return AgentClass.DELEGATOR


def _reaches_abstainer(profile: DelegationProfile, i: int) -> bool:
    seen = set()
    a = i
    while a not in seen:
        seen.add(a)
        t = profile.targets[a]
        if t == NULL_AGENT:
            return True
        a = t
    return False
