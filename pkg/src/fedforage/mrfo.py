"""Manta-ray foraging optimization over a bounded box (maximization).

Two update families drive the population: chain moves, where each individual
tracks its predecessor and the best-known position, and cyclone moves, which
spiral around either the best position (exploitation) or a fresh uniform
anchor (exploration).  Somersault moves are deliberately not part of this
variant.  Updates within an iteration read a snapshot of the previous
iteration's positions, so per-individual work is order-independent; a
candidate replaces its individual only when it improves that individual's
fitness (greedy acceptance, as in the reference implementation).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class MRFOConfig:
    bounds: tuple[tuple[float, float], ...]
    population: int = 10
    iterations: int = 10
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError(f"population must be >= 2, got {self.population}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 1 <= self.patience <= self.iterations:
            raise ValueError(
                f"patience must be in [1, iterations], got {self.patience}"
            )
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"bad bound ({lo}, {hi})")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])


@dataclass
class Population:
    positions: np.ndarray  # (N, D)
    fitness: np.ndarray  # (N,)
    best_position: np.ndarray
    best_fitness: float
    iteration: int = 0


@dataclass
class HistoryRow:
    iteration: int
    best_fitness: float
    mean_fitness: float
    evaluations: int


@dataclass
class MRFOResult:
    best_position: np.ndarray
    best_fitness: float
    history: list[HistoryRow]
    evaluations: int
    nan_count: int = 0


# ---------------------------------------------------------------------------
# scalar coefficient formulas


def cyclone_gamma(r1, s: int, big_r: int):
    """Spiral weight 2 * e^(r1 * (R - s + 1) / R) * sin(2 pi r1).

    Scalar in, scalar out; the population steps apply it coordinate-wise by
    passing an r1 vector.
    """
    if not 1 <= s <= big_r:
        raise ValueError(f"iteration s={s} outside [1, {big_r}]")
    return 2.0 * np.exp(r1 * (big_r - s + 1) / big_r) * np.sin(2.0 * np.pi * r1)


def chain_eta(alpha):
    """Chain weight 2 * alpha * sqrt(|log alpha|), natural log, alpha in (0,1]."""
    if np.any(np.asarray(alpha) <= 0.0):
        raise ValueError(f"alpha must be positive, got {alpha}")
    return 2.0 * alpha * np.sqrt(np.abs(np.log(alpha)))


# ---------------------------------------------------------------------------
# single-individual moves (pure; coefficients supplied by the caller)


def chain_move(x, ref, best, r, eta):
    """x + r*(ref - x) + eta*(best - x); ref is best for the leader."""
    return x + r * (ref - x) + eta * (best - x)


def cyclone_move(anchor, x, ref, r, gamma):
    """anchor + r*(ref - x) + gamma*(anchor - x); ref is anchor for the leader."""
    return anchor + r * (ref - x) + gamma * (anchor - x)


def _clamp(pos: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.clip(pos, lower, upper)


# ---------------------------------------------------------------------------
# whole-population steps (snapshot semantics)


def chain_step(pop: Population, config: MRFOConfig, rng: np.random.Generator) -> np.ndarray:
    """One chain update of every individual; returns new clamped positions."""
    old = pop.positions
    n, d = old.shape
    new = np.empty_like(old)
    for i in range(n):
        r = rng.random(d)
        eta = chain_eta(1.0 - rng.random(d))  # alpha in (0, 1], per dimension
        ref = pop.best_position if i == 0 else old[i - 1]
        new[i] = chain_move(old[i], ref, pop.best_position, r, eta)
    return _clamp(new, config.lower, config.upper)


def cyclone_step_exploit(
    pop: Population, config: MRFOConfig, rng: np.random.Generator, s: int | None = None
) -> np.ndarray:
    """Cyclone update anchored at the best-known position."""
    old = pop.positions
    n, d = old.shape
    s = pop.iteration + 1 if s is None else s
    new = np.empty_like(old)
    for i in range(n):
        r = rng.random(d)
        gamma = cyclone_gamma(rng.random(d), s, config.iterations)
        ref = pop.best_position if i == 0 else old[i - 1]
        new[i] = cyclone_move(pop.best_position, old[i], ref, r, gamma)
    return _clamp(new, config.lower, config.upper)


def cyclone_step_explore(
    pop: Population, config: MRFOConfig, rng: np.random.Generator, s: int | None = None
) -> np.ndarray:
    """Cyclone update anchored at a fresh uniform point inside the bounds."""
    old = pop.positions
    n, d = old.shape
    s = pop.iteration + 1 if s is None else s
    lower, upper = config.lower, config.upper
    new = np.empty_like(old)
    for i in range(n):
        anchor = lower + rng.random(d) * (upper - lower)
        r = rng.random(d)
        gamma = cyclone_gamma(rng.random(d), s, config.iterations)
        ref = anchor if i == 0 else old[i - 1]
        new[i] = cyclone_move(anchor, old[i], ref, r, gamma)
    return _clamp(new, config.lower, config.upper)


# ---------------------------------------------------------------------------
# driver


def _evaluate(objective: Objective, position: np.ndarray) -> tuple[float, bool]:
    value = float(objective(position))
    if math.isnan(value):
        return -math.inf, True
    return value, False


def mrfo_optimize(objective: Objective, config: MRFOConfig) -> MRFOResult:
    """Maximize `objective` over the configured box.

    Per iteration each individual flips a fair coin between the cyclone and
    chain families; inside the cyclone family it explores (random anchor)
    while s/R < rand and exploits (best anchor) otherwise.  Stops after the
    iteration budget or once the best fitness has gone more than `patience`
    iterations without improving.  NaN fitness values count as -inf and are
    tallied.
    """
    rng = np.random.default_rng(config.seed)
    lower, upper = config.lower, config.upper
    n, d = config.population, len(config.bounds)
    big_r = config.iterations

    positions = lower + rng.random((n, d)) * (upper - lower)
    nan_count = 0
    fitness = np.empty(n)
    for i in range(n):
        fitness[i], bad = _evaluate(objective, positions[i])
        nan_count += bad
    evaluations = n

    best_i = int(np.argmax(fitness))
    pop = Population(
        positions=positions,
        fitness=fitness,
        best_position=positions[best_i].copy(),
        best_fitness=float(fitness[best_i]),
    )

    history: list[HistoryRow] = []
    stale = 0
    for s in range(1, big_r + 1):
        old = pop.positions.copy()
        for i in range(n):
            if rng.random() < 0.5:  # cyclone family
                r = rng.random(d)
                gamma = cyclone_gamma(rng.random(d), s, big_r)
                if s / big_r < rng.random():  # explore
                    anchor = lower + rng.random(d) * (upper - lower)
                    ref = anchor if i == 0 else old[i - 1]
                    cand = cyclone_move(anchor, old[i], ref, r, gamma)
                else:  # exploit
                    ref = pop.best_position if i == 0 else old[i - 1]
                    cand = cyclone_move(pop.best_position, old[i], ref, r, gamma)
            else:  # chain family
                r = rng.random(d)
                eta = chain_eta(1.0 - rng.random(d))
                ref = pop.best_position if i == 0 else old[i - 1]
                cand = chain_move(old[i], ref, pop.best_position, r, eta)
            cand = _clamp(cand, lower, upper)
            value, bad = _evaluate(objective, cand)
            nan_count += bad
            if value > pop.fitness[i]:  # greedy acceptance
                pop.fitness[i] = value
                pop.positions[i] = cand
        evaluations += n
        pop.iteration = s

        round_best = int(np.argmax(pop.fitness))
        if pop.fitness[round_best] > pop.best_fitness:
            pop.best_fitness = float(pop.fitness[round_best])
            pop.best_position = pop.positions[round_best].copy()
            stale = 0
        else:
            stale += 1

        finite = pop.fitness[np.isfinite(pop.fitness)]
        history.append(
            HistoryRow(
                iteration=s,
                best_fitness=pop.best_fitness,
                mean_fitness=float(finite.mean()) if finite.size else -math.inf,
                evaluations=evaluations,
            )
        )
        if stale > config.patience:
            break

    if nan_count:
        warnings.warn(f"objective returned NaN for {nan_count} candidate(s)", RuntimeWarning)
    return MRFOResult(
        best_position=pop.best_position,
        best_fitness=pop.best_fitness,
        history=history,
        evaluations=evaluations,
        nan_count=nan_count,
    )


def write_history_csv(history: Sequence[HistoryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "best_fitness", "mean_fitness", "evaluations"])
        for row in history:
            out.writerow([row.iteration, row.best_fitness, row.mean_fitness, row.evaluations])
