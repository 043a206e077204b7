"""Offline probes of the crossover operator on a live training run.

A probe freezes the current discriminator and parents, replays one mutation
phase with its own noise stream, and studies crossover on the top-scoring
offspring pair. The training state and its random streams are left untouched,
so probing does not change the run being probed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import sample_noise
from .evolution import (EvolutionState, basis_is_first, crossover, crossover_task, evaluate,
                        evolutionary_step, mutate, score_pairs)

PROBE_STREAM = 0xC505


@dataclass
class CrossoverEvent:
    generation: int
    parent_fitness: tuple[float, float]
    child_fitness: float
    worse_child_fitness: float
    initial_loss: float
    refined_loss: float
    better_budget_loss: float
    worse_budget_loss: float

    @property
    def child_beats_parents(self) -> bool:
        return self.child_fitness >= max(self.parent_fitness)

    @property
    def refined_fraction(self) -> float:
        return self.refined_loss / self.initial_loss if self.initial_loss > 0 else 0.0

    @property
    def better_init_wins(self) -> bool:
        return self.better_budget_loss < self.worse_budget_loss


def probe_crossover(state: EvolutionState, extra_steps: int = 50, budget: int = 50) -> CrossoverEvent:
    """Crossover on this generation's best offspring pair, without advancing ``state``.

    ``refined_loss`` is the child's distillation loss after ``extra_steps``
    further updates, relative to ``initial_loss`` at the basis parent.
    ``better_budget_loss`` / ``worse_budget_loss`` come from ``budget`` updates
    started at the better and the worse parent respectively.
    """
    cfg = state.config
    gs, ds, omega = state.gen_spec, state.disc_spec, state.omega
    rng = np.random.default_rng([cfg.seed, state.generation, PROBE_STREAM])
    eval_noise = sample_noise(state.noise, cfg.n, rng)
    offspring = []
    for j, parent in enumerate(state.parents):
        z = sample_noise(state.noise, cfg.m, rng)
        for kind in cfg.mutations:
            child = mutate(parent, kind, omega, z, gs, ds, cfg, j)
            offspring.append(evaluate(child, omega, eval_noise, gs, ds, cfg))
    pairs = score_pairs(offspring)
    if not pairs:
        raise RuntimeError("fewer than two live offspring to cross")
    x, y = offspring[pairs[0].i], offspring[pairs[0].j]

    child = evaluate(crossover(x, y, omega, eval_noise, gs, ds, cfg, pairs[0].i, pairs[0].j),
                     omega, eval_noise, gs, ds, cfg)
    flipped = cfg.__class__(**{**cfg.__dict__, "crossover_basis": "worse"})
    worse_child = evaluate(crossover(x, y, omega, eval_noise, gs, ds, flipped, pairs[0].i, pairs[0].j),
                           omega, eval_noise, gs, ds, cfg)

    first = basis_is_first(x, y, cfg)
    better, worse = (x, y) if first else (y, x)
    task = crossover_task(x, y, omega, eval_noise, gs, ds, cfg, first)
    initial = task.loss(better.params, gs)
    _, _, hist = task.run(child.params, child.adam, extra_steps, gs, cfg)

    worse_task = crossover_task(x, y, omega, eval_noise, gs, ds, cfg, not first)
    _, _, b_hist = task.run(better.params.copy(), better.adam.copy(), budget, gs, cfg)
    _, _, w_hist = worse_task.run(worse.params.copy(), worse.adam.copy(), budget, gs, cfg)
    return CrossoverEvent(state.generation, (float(x.fitness), float(y.fitness)), float(child.fitness),
                          float(worse_child.fitness), initial, hist[-1], b_hist[-1], w_hist[-1])


def crossover_study(state: EvolutionState, warmup: int, every: int, count: int,
                    extra_steps: int = 50, budget: int = 50) -> list[CrossoverEvent]:
    """Train ``warmup`` generations, then probe once every ``every`` generations, ``count`` times."""
    for _ in range(warmup):
        evolutionary_step(state)
    events = []
    for _ in range(count):
        events.append(probe_crossover(state, extra_steps, budget))
        for _ in range(every):
            evolutionary_step(state)
    return events
