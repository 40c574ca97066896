"""Simulation of delegation dynamics on random networks.

Two dynamics are supported. One-shot improvement (OSI) lets every agent best
respond to the trivial profile at the same time. Iterated better response
(IBRD) lets agents sample a random neighbor in turn and switch to it when that
strictly helps, until a full round passes without change.

Every instance is a pure function of ``(config, grid point, instance index)``:
its graph, accuracies, Monte-Carlo seed and IBRD generator are all derived from
``master_seed`` through :class:`numpy.random.SeedSequence`. Instances can
therefore run in any order, in any number of worker processes, and still
produce byte-identical tables.
"""

from __future__ import annotations

import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import DelegationProfile
from .game import DelegationGame, _pick, _utility
from .power import (
    DEFAULT_CONFIDENCE,
    DEFAULT_SAMPLES,
    ExactBackend,
    MonteCarloBackend,
    PowerBackend,
)

OSI = "OSI"
IBRD = "IBRD"
DYNAMICS = (OSI, IBRD)

# SeedSequence spawn keys per instance.
_GRAPH, _ACCURACY, _BACKEND, _IBRD = range(4)
# Backend streams: dynamics and metrics use independent coalition samples.
DYNAMICS_STREAM = 0
METRICS_STREAM = 1

THREADS_ENV = "LIQUIDPOWER_THREADS"


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 30
    quota: Fraction = Fraction(16)
    p: float = 0.75
    alpha: float = 1.0
    instances: int = 50
    accuracy_mean: float = 0.75
    accuracy_sd: float = 0.125
    max_rounds: int = 50
    mc_samples: int = DEFAULT_SAMPLES
    confidence: float = DEFAULT_CONFIDENCE
    master_seed: int = 0
    dynamics: tuple[str, ...] = DYNAMICS
    backend: str = "mc"

    def __post_init__(self) -> None:
        object.__setattr__(self, "quota", Fraction(self.quota))
        if not Fraction(self.n, 2) < self.quota <= self.n:
            raise ValueError(f"quota {self.quota} outside (n/2, n] for n={self.n}")
        if self.instances < 1:
            raise ValueError("instances must be at least 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.backend not in ("mc", "exact"):
            raise ValueError("backend must be 'mc' or 'exact'")
        if not self.dynamics or any(x not in DYNAMICS for x in self.dynamics):
            raise ValueError(f"dynamics must be drawn from {DYNAMICS}")

    def make_backend(self, seed: int) -> PowerBackend:
        if self.backend == "exact":
            return ExactBackend()
        return MonteCarloBackend(self.mc_samples, self.confidence, seed)


@dataclass(frozen=True)
class Metrics:
    delegator_ratio: float
    longest_chain: int
    avg_chain_length: float
    max_db: float
    min_db: float
    mean_db: float
    gini: float
    weighted_guru_accuracy: float
    converged: bool = True
    rounds: int = 1


@dataclass(frozen=True)
class Move:
    round: int
    agent: int
    old_target: int
    new_target: int
    old_utility: float
    new_utility: float


@dataclass(frozen=True)
class IbrdResult:
    profile: DelegationProfile
    converged: bool
    rounds: int
    moves: tuple[Move, ...] = ()

    def __iter__(self):
        # Allows ``d, converged, rounds = ibrd(...)``.
        return iter((self.profile, self.converged, self.rounds))


def gen_random_digraph(n: int, p: float, seed) -> tuple[tuple[int, ...], ...]:
    """Each ordered pair ``(i, j)``, ``i != j``, is an edge with probability ``p``.

    One uniform draw decides each pair, so for a fixed seed the graphs grow
    monotonically with ``p``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    u = np.random.default_rng(seed).random((n, n))
    adj = u < p
    np.fill_diagonal(adj, False)
    return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in adj)


def sample_accuracies(n: int, mean: float = 0.75, sd: float = 0.125, seed=None) -> np.ndarray:
    """I.i.d. normal draws, resampling anything outside ``(0.5, 1]``."""
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    filled = 0
    while filled < n:
        draw = rng.normal(mean, sd, size=n)
        ok = draw[(draw > 0.5) & (draw <= 1.0)]
        take = min(n - filled, ok.size)
        out[filled : filled + take] = ok[:take]
        filled += take
    return out


def gini(values) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise EmptyInput("gini of an empty vector")
    total = x.sum()
    if total == 0:
        return 0.0
    n = x.size
    ranks = np.arange(1, n + 1)
    # fsum lets the symmetric terms of a constant vector cancel exactly.
    return max(0.0, math.fsum((2 * ranks - n - 1) * x) / (n * total))


def osi(game: DelegationGame, backend: Optional[PowerBackend] = None, stream: int = DYNAMICS_STREAM) -> DelegationProfile:
    """Every agent best responds to the trivial profile, all at once."""
    backend = backend or ExactBackend()
    base = game.trivial()
    targets = []
    for i in range(game.n):
        scored = [(s, _utility(game, base.with_target(i, s), i, backend, stream)) for s in game.strategies(i)]
        targets.append(_pick(i, i, scored))
    return DelegationProfile(tuple(targets))


def ibrd(
    game: DelegationGame,
    max_rounds: int = 50,
    seed=None,
    backend: Optional[PowerBackend] = None,
    order: Optional[Sequence[int]] = None,
    start: Optional[DelegationProfile] = None,
    stream: int = DYNAMICS_STREAM,
) -> IbrdResult:
    """Iterated better-response dynamics.

    In each round agents move in ``order`` (ascending id by default). An agent
    draws targets uniformly, with replacement, from its strategy set and takes
    the first one that strictly raises its utility. It gives up after
    ``2 * (|E(i)| + 1) + 1`` failed draws. The run has converged once a whole
    round passes with no change.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    backend = backend or ExactBackend()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = tuple(range(game.n)) if order is None else tuple(order)
    d = start if start is not None else game.trivial()
    game.check_legal(d)
    moves: list[Move] = []
    for r in range(1, max_rounds + 1):
        changed = False
        for i in order:
            options = game.strategies(i)
            if len(options) == 1:
                continue
            limit = 2 * len(options) + 1
            now = _utility(game, d, i, backend, stream)
            failures = 0
            while failures < limit:
                target = options[int(rng.integers(len(options)))]
                if target != d.targets[i]:
                    trial = d.with_target(i, target)
                    u = _utility(game, trial, i, backend, stream)
                    if u > now:
                        moves.append(Move(r, i, d.targets[i], target, now, u))
                        d = trial
                        changed = True
                        break
                failures += 1
        if not changed:
            return IbrdResult(d, True, r, tuple(moves))
    return IbrdResult(d, False, max_rounds, tuple(moves))


def compute_metrics(
    game: DelegationGame,
    d: DelegationProfile,
    backend: Optional[PowerBackend] = None,
    stream: int = METRICS_STREAM,
    converged: bool = True,
    rounds: int = 1,
) -> Metrics:
    game.check_legal(d)
    backend = backend or ExactBackend()
    n = game.n
    delegators = sum(1 for i, t in enumerate(d.targets) if t != i)
    hops = [h for h in d.hops if h is not None]
    lde = game.lde(d)
    db = np.array([float(x) for x in backend.db_all(lde, stream)])
    followers: dict[int, int] = {}
    for g in d.gurus:
        if g is not None:
            followers[g] = followers.get(g, 0) + 1
    mass = sum(followers.values())
    wacc = math.fsum(c * game.accuracies[g] for g, c in followers.items()) / mass if mass else 0.0
    return Metrics(
        delegator_ratio=delegators / n,
        longest_chain=max(hops, default=0),
        avg_chain_length=sum(hops) / len(hops) if hops else 0.0,
        max_db=float(db.max()),
        min_db=float(db.min()),
        mean_db=math.fsum(db) / n,
        gini=gini(db),
        weighted_guru_accuracy=wacc,
        converged=converged,
        rounds=rounds,
    )


@dataclass(frozen=True)
class Instance:
    game: DelegationGame
    backend_seed: int
    ibrd_seed: np.random.SeedSequence


def _seq(config: ExperimentConfig, instance: int, key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.master_seed, instance, key])


def make_instance(config: ExperimentConfig, instance: int) -> Instance:
    edges = gen_random_digraph(config.n, config.p, _seq(config, instance, _GRAPH))
    acc = sample_accuracies(config.n, config.accuracy_mean, config.accuracy_sd, _seq(config, instance, _ACCURACY))
    game = DelegationGame(config.n, edges, tuple(float(q) for q in acc), config.quota, config.alpha)
    backend_seed = int(_seq(config, instance, _BACKEND).generate_state(1, np.uint64)[0])
    return Instance(game, backend_seed, _seq(config, instance, _IBRD))


def run_instance(config: ExperimentConfig, instance: int) -> dict[str, Metrics]:
    inst = make_instance(config, instance)
    backend = config.make_backend(inst.backend_seed)
    out: dict[str, Metrics] = {}
    if OSI in config.dynamics:
        d = osi(inst.game, backend)
        out[OSI] = compute_metrics(inst.game, d, backend)
    if IBRD in config.dynamics:
        res = ibrd(inst.game, config.max_rounds, np.random.default_rng(inst.ibrd_seed), backend)
        out[IBRD] = compute_metrics(inst.game, res.profile, backend, converged=res.converged, rounds=res.rounds)
    return out


@dataclass(frozen=True)
class Row:
    preset: str
    dynamics: str
    grid_param: str
    grid_value: object
    instances: int
    delegator_ratio: float
    longest_chain: float
    avg_chain_length: float
    max_db: float
    min_db: float
    mean_db: float
    gini: float
    weighted_guru_accuracy: float
    converged_count: int
    mean_rounds: float
    master_seed: int


GRID_PARAMS = ("p", "alpha", "quota")

_MEAN_FIELDS = (
    "delegator_ratio",
    "longest_chain",
    "avg_chain_length",
    "max_db",
    "min_db",
    "mean_db",
    "gini",
    "weighted_guru_accuracy",
)


def aggregate(preset: str, dynamics: str, grid_param: str, grid_value, config: ExperimentConfig, runs: Sequence[Metrics]) -> Row:
    k = len(runs)
    means = {f: math.fsum(getattr(m, f) for m in runs) / k for f in _MEAN_FIELDS}
    return Row(
        preset=preset,
        dynamics=dynamics,
        grid_param=grid_param,
        grid_value=grid_value,
        instances=k,
        converged_count=sum(1 for m in runs if m.converged),
        mean_rounds=math.fsum(m.rounds for m in runs) / k,
        master_seed=config.master_seed,
        **means,
    )


def _point_config(config: ExperimentConfig, grid_param: str, value) -> ExperimentConfig:
    if grid_param == "quota":
        return replace(config, quota=Fraction(value))
    return replace(config, **{grid_param: float(value)})


def _task(args: tuple[ExperimentConfig, int]) -> dict[str, Metrics]:
    return run_instance(*args)


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


def run_experiment(
    config: ExperimentConfig,
    grid_param: str,
    grid: Sequence,
    threads: Optional[int] = None,
    preset: str = "custom",
) -> list[Row]:
    """One aggregated row per (grid point, dynamics), grid order first.

    All grid points reuse the same instances (graphs, accuracies, seeds), so
    differences along the grid are not masked by instance-to-instance noise.
    """
    if grid_param not in GRID_PARAMS:
        raise ValueError(f"grid_param must be one of {GRID_PARAMS}")
    points = [_point_config(config, grid_param, v) for v in grid]
    tasks = [(pc, k) for pc in points for k in range(config.instances)]
    threads = resolve_threads(threads)
    if threads == 1 or len(tasks) == 1:
        results = [_task(t) for t in tasks]
    else:
        # Spawned workers start clean instead of inheriting the parent's caches.
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    rows = []
    for idx, value in enumerate(grid):
        chunk = results[idx * config.instances : (idx + 1) * config.instances]
        for dyn in config.dynamics:
            rows.append(aggregate(preset, dyn, grid_param, value, config, [r[dyn] for r in chunk]))
    return rows


@dataclass(frozen=True)
class Preset:
    name: str
    config: ExperimentConfig
    grid_param: str
    grid: tuple = field(default_factory=tuple)


def preset(name: str, master_seed: int = 0) -> Preset:
    """Parameter sets of the three reported experiments.

    ``A`` varies the edge probability, ``B`` the power exponent and ``C`` the
    quota. ``C-body`` is the alternative quota grid ``{18, 24, 30}``.
    """
    base = ExperimentConfig(master_seed=master_seed)
    key = name.upper()
    if key == "A":
        return Preset("A", replace(base, alpha=1.0), "p", tuple(round(0.1 * k, 1) for k in range(1, 11)))
    if key == "B":
        return Preset("B", replace(base, p=0.75), "alpha", (0.0, 0.25, 0.5, 0.75, 1.0))
    if key == "C":
        return Preset("C", replace(base, p=0.75, alpha=1.0), "quota", (18, 21, 24, 27))
    if key == "C-BODY":
        return Preset("C-body", replace(base, p=0.75, alpha=1.0), "quota", (18, 24, 30))
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("A", "B", "C", "C-body")
