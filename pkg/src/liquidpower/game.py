"""Delegation games with power-seeking utilities.

An agent's utility in profile ``d`` is ``DB_i(d) ** alpha * q[guru(i)]``:
delegative Banzhaf power (unit weights) raised to ``alpha``, times the
accuracy of the guru the agent ends up with. Agents without a guru get 0,
and ``0 ** 0`` is taken as 1, so ``alpha = 0`` is pure accuracy seeking.

Deviations must improve utility strictly. Ties always keep the status quo.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from .core import DelegationProfile, Lde
from .power import ExactBackend, PowerBackend, TooLarge

DEFAULT_PROFILE_CAP = 1 << 20


class IllegalStrategy(ValueError):
    pass


class NotComplete(ValueError):
    pass


@dataclass(frozen=True)
class DelegationGame:
    """Strategic environment: directed network, accuracies, quota and ``alpha``.

    ``edges[i]`` lists the agents ``i`` may delegate to; ``i`` itself is always
    an implicit option. Weights are all 1.
    """

    n: int
    edges: tuple[tuple[int, ...], ...]
    accuracies: tuple[float, ...]
    quota: Fraction
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if len(self.edges) != self.n or len(self.accuracies) != self.n:
            raise ValueError("edges and accuracies must have one entry per agent")
        edges = tuple(tuple(sorted({int(j) for j in nbrs if int(j) != i})) for i, nbrs in enumerate(self.edges))
        for nbrs in edges:
            if any(not 0 <= j < self.n for j in nbrs):
                raise ValueError("edge points outside the agent set")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "accuracies", tuple(float(q) for q in self.accuracies))
        object.__setattr__(self, "quota", Fraction(self.quota))
        for q in self.accuracies:
            if not 0.5 < q <= 1.0:
                raise ValueError(f"accuracy {q} outside (1/2, 1]")
        if not Fraction(self.n, 2) < self.quota <= self.n:
            raise ValueError(f"quota {self.quota} outside (n/2, n]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @classmethod
    def from_pairs(cls, n: int, pairs, accuracies, quota, alpha: float = 1.0) -> DelegationGame:
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for i, j in pairs:
            nbrs[i].append(j)
        return cls(n, tuple(tuple(x) for x in nbrs), tuple(accuracies), Fraction(quota), alpha)

    @classmethod
    def complete(cls, accuracies, quota, alpha: float = 1.0) -> DelegationGame:
        n = len(accuracies)
        return cls(n, tuple(tuple(j for j in range(n) if j != i) for i in range(n)), tuple(accuracies), Fraction(quota), alpha)

    def with_alpha(self, alpha: float) -> DelegationGame:
        return DelegationGame(self.n, self.edges, self.accuracies, self.quota, alpha)

    def strategies(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.edges[i] + (i,)))

    def is_complete(self) -> bool:
        return all(len(self.edges[i]) == self.n - 1 for i in range(self.n))

    def profile_count(self) -> int:
        return math.prod(len(e) + 1 for e in self.edges)

    def trivial(self) -> DelegationProfile:
        return DelegationProfile.trivial(self.n)

    def check_legal(self, d: DelegationProfile) -> None:
        if d.n != self.n:
            raise IllegalStrategy("profile size does not match the game")
        for i, t in enumerate(d.targets):
            if t != i and t not in self.edges[i]:
                raise IllegalStrategy(f"agent {i} cannot delegate to {t}")

    def lde(self, d: DelegationProfile) -> Lde:
        return _lde(self.n, self.quota, d)


# Kept small: only exhaustive searches on small games revisit profiles.
@lru_cache(maxsize=4096)
def _lde(n: int, quota: Fraction, d: DelegationProfile) -> Lde:
    return Lde((Fraction(1),) * n, d, quota)


def utility(
    game: DelegationGame,
    d: DelegationProfile,
    i: int,
    backend: Optional[PowerBackend] = None,
    stream: int = 0,
) -> float:
    game.check_legal(d)
    return _utility(game, d, i, backend or ExactBackend(), stream)


def _utility(game: DelegationGame, d: DelegationProfile, i: int, backend: PowerBackend, stream: int) -> float:
    guru = d.gurus[i]
    if guru is None:
        return 0.0
    q = game.accuracies[guru]
    if game.alpha == 0.0:
        return q
    db = float(backend.db(game.lde(d), i, stream))
    if game.alpha == 1.0:
        return db * q
    return db ** game.alpha * q


def _pick(current: int, i: int, scored: Sequence[tuple[int, float]]) -> int:
    best = max(u for _, u in scored)
    top = [s for s, u in scored if u == best]
    if current in top:
        return current
    if i in top:
        return i
    return min(top)


def best_response(
    game: DelegationGame,
    d: DelegationProfile,
    i: int,
    backend: Optional[PowerBackend] = None,
    stream: int = 0,
) -> int:
    """Utility-maximizing target for ``i`` with everyone else fixed.

    Ties go to the current strategy, then to voting directly, then to the
    lowest agent id.
    """
    game.check_legal(d)
    backend = backend or ExactBackend()
    scored = [(s, _utility(game, d.with_target(i, s), i, backend, stream)) for s in game.strategies(i)]
    return _pick(d.targets[i], i, scored)


@dataclass(frozen=True)
class Deviation:
    agent: int
    old_target: int
    new_target: int
    old_utility: float
    new_utility: float

    def __str__(self) -> str:
        return (
            f"agent {self.agent + 1}: {self.old_target + 1} -> {self.new_target + 1} "
            f"({self.old_utility:.4f} -> {self.new_utility:.4f})"
        )


@dataclass(frozen=True)
class NashVerdict:
    is_nash: bool
    witness: Optional[Deviation] = None
    advisory: bool = False

    def __bool__(self) -> bool:
        return self.is_nash


def find_deviation(
    game: DelegationGame, d: DelegationProfile, backend: PowerBackend, stream: int = 0
) -> Optional[Deviation]:
    """Most profitable unilateral deviation of the lowest-indexed agent that has one."""
    for i in range(game.n):
        now = _utility(game, d, i, backend, stream)
        best: Optional[Deviation] = None
        for s in game.strategies(i):
            if s == d.targets[i]:
                continue
            u = _utility(game, d.with_target(i, s), i, backend, stream)
            if u > now and (best is None or u > best.new_utility):
                best = Deviation(i, d.targets[i], s, now, u)
        if best is not None:
            return best
    return None


def is_nash(
    game: DelegationGame, d: DelegationProfile, backend: Optional[PowerBackend] = None
) -> NashVerdict:
    """Exact verdict by default; a Monte-Carlo backend yields an advisory verdict."""
    game.check_legal(d)
    backend = backend or ExactBackend()
    dev = find_deviation(game, d, backend)
    return NashVerdict(dev is None, dev, advisory=not backend.exact)


def legal_profiles(game: DelegationGame):
    for combo in itertools.product(*(game.strategies(i) for i in range(game.n))):
        yield DelegationProfile(combo)


def find_pure_ne(
    game: DelegationGame,
    backend: Optional[PowerBackend] = None,
    cap: int = DEFAULT_PROFILE_CAP,
) -> list[DelegationProfile]:
    if game.profile_count() > cap:
        raise TooLarge(f"{game.profile_count()} profiles exceeds the cap of {cap}")
    backend = backend or ExactBackend()
    return [d for d in legal_profiles(game) if find_deviation(game, d, backend) is None]


def theorem2_instance() -> DelegationGame:
    """Six-agent game on edges 1->3, 2->3, 4->6, 5->6 that has no pure NE."""
    return DelegationGame.from_pairs(
        6,
        [(0, 2), (1, 2), (3, 5), (4, 5)],
        (0.51, 0.7, 0.9, 0.6, 0.7, 0.9),
        Fraction(4),
        alpha=1.0,
    )


def construct_ne_complete(
    game: DelegationGame,
    order: Optional[Sequence[int]] = None,
    backend: Optional[PowerBackend] = None,
) -> DelegationProfile:
    """Build an equilibrium on a complete network.

    The most accurate agent (lowest id on ties) stays a guru. In repeated
    passes over the remaining gurus, in ``order`` (ascending id by default),
    each one delegates to that agent if this strictly raises its utility;
    such delegations are final. Stops after a pass with no change.
    """
    if not game.is_complete():
        raise NotComplete("equilibrium construction needs a complete network")
    backend = backend or ExactBackend()
    star = max(range(game.n), key=lambda a: (game.accuracies[a], -a))
    seq = [a for a in (order if order is not None else range(game.n)) if a != star]
    if sorted(seq) != sorted(a for a in range(game.n) if a != star):
        raise ValueError("order must be a permutation of the agents")
    d = game.trivial()
    remaining = list(seq)
    changed = True
    while changed:
        changed = False
        for a in list(remaining):
            stay = _utility(game, d, a, backend, 0)
            moved = d.with_target(a, star)
            if _utility(game, moved, a, backend, 0) > stay:
                d = moved
                remaining.remove(a)
                changed = True
    return d


@dataclass(frozen=True)
class Lemma6Case:
    n: int
    n_prime: int
    n_star: int
    ceil_beta: int
    lhs: int
    rhs: int

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs


def lemma6_cases(max_n: int = 20):
    """All parameterizations with ``n = n_star + n_prime + 2`` and ``beta`` in ``(n/2, n]``.

    Only ``ceil(beta)`` enters the inequality, so ``beta`` ranges over the
    integers ``floor(n/2)+1 .. n``.
    """
    for n in range(2, max_n + 1):
        for n_star in range(n - 1):
            n_prime = n - 2 - n_star
            for cb in range(n // 2 + 1, n + 1):
                k = cb - 2
                lhs = math.comb(n_prime + n_star, k) if k >= 0 else 0
                rhs = (math.comb(n_prime, k) if k >= 0 else 0) * 2**n_star
                yield Lemma6Case(n, n_prime, n_star, cb, lhs, rhs)


def lemma6_violations(max_n: int = 20) -> list[Lemma6Case]:
    return [c for c in lemma6_cases(max_n) if not c.holds]
