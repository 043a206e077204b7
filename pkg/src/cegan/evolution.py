"""Evolutionary GAN engine: mutation, pair scoring, distillation crossover, selection.

One generation (:func:`evolutionary_step`) runs four phases in order:

1. ``n_d`` discriminator updates. Each draws ``m`` real rows (data stream),
   then ``m`` noise rows (noise stream) split ``m/mu`` per parent, and, with the
   gradient penalty on, ``m`` interpolation weights (aux stream).
2. Mutation. Draws the shared evaluation noise (``n`` rows, noise stream), a
   real batch of ``n`` rows when the fitness is ``egan`` (data stream), then
   one ``m``-row noise batch per parent (noise stream) shared by all of that
   parent's mutation kinds. Every offspring takes one Adam step and is scored
   on the shared evaluation batch, caching its samples and logits.
3. Crossover over the top ``n_c`` offspring pairs, reusing the cached samples.
4. Greedy selection of ``mu`` parents from mutants plus crossover children;
   current parents are not candidates.

Offspring work in phases 2 and 3 may run on a thread pool; results are merged
in lineage order so logs do not depend on the worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .autodiff import Tape, backward
from .data import DatasetSpec, NoiseSpec, RngStreams, centers, sample_noise, sample_real
from .fitness import FITNESS_TAGS, FitnessReport, report_from_samples
from .nets import (AdamState, MlpSpec, NonFiniteGradient, adam_step, bind_params,
                   check_discriminator_spec, const_params, critic, discriminator_forward,
                   flat_grad, generate, generator_forward, init_params)
from .objectives import MUTATION_KINDS, d_loss, distillation_loss, gp_term, mutation_loss


class EvolutionAborted(RuntimeError):
    """Every offspring of a generation failed."""


@dataclass
class EvolutionConfig:
    mu: int = 1
    mutations: tuple[str, ...] = MUTATION_KINDS
    n_c: int = 1
    n_d: int = 3
    m: int = 32
    n: int = 256
    alpha: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    gamma: float = 0.05
    gp: bool = False
    gp_lambda: float = 10.0
    fitness: str = "cgan"
    k_cross: int = 1
    crossover_basis: str = "better"
    tie_policy: str = "basis"
    distill_normalize: bool = True
    seed: int = 0
    iterations: int = 1000
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.mutations, str):
            self.mutations = tuple(s.strip() for s in self.mutations.split(",") if s.strip())
        self.mutations = tuple(self.mutations)
        self.validate()

    @property
    def n_m(self) -> int:
        return len(self.mutations)

    def validate(self) -> None:
        for name in ("mu", "n_d", "m", "n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n_m < 1:
            raise ValueError("at least one mutation kind is required")
        unknown = set(self.mutations) - set(MUTATION_KINDS)
        if unknown:
            raise ValueError(f"unknown mutation kinds {sorted(unknown)}")
        if len(set(self.mutations)) != self.n_m:
            raise ValueError("mutation kinds must be distinct")
        if self.m % self.mu:
            raise ValueError(f"mu={self.mu} must divide the mutation batch size m={self.m}")
        pool = self.mu * self.n_m
        if not 0 <= self.n_c <= pool * (pool - 1) // 2:
            raise ValueError(f"n_c={self.n_c} exceeds the {pool * (pool - 1) // 2} available offspring pairs")
        if pool + self.n_c < self.mu:
            raise ValueError("selection pool is smaller than the population")
        if self.alpha < 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid Adam hyperparameters")
        if self.fitness not in FITNESS_TAGS:
            raise ValueError(f"fitness must be one of {FITNESS_TAGS}")
        if self.fitness == "egan" and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be non-negative")
        if self.k_cross < 0:
            raise ValueError("k_cross must be non-negative")
        if self.crossover_basis not in ("better", "worse"):
            raise ValueError("crossover_basis must be 'better' or 'worse'")
        if self.tie_policy not in ("basis", "none"):
            raise ValueError("tie_policy must be 'basis' or 'none'")
        if self.iterations < 0 or self.workers < 1:
            raise ValueError("iterations must be >= 0 and workers >= 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class Individual:
    params: np.ndarray
    adam: AdamState
    lineage: str = "init"
    fitness: float | None = None
    report: FitnessReport | None = None
    failed: bool = False
    cached_samples: np.ndarray | None = None
    cached_C: np.ndarray | None = None

    @property
    def operator(self) -> str:
        return self.lineage.split("@", 1)[0]

    def fresh_copy(self, lineage: str | None = None) -> "Individual":
        return Individual(self.params.copy(), self.adam.copy(), lineage or self.lineage)


@dataclass(frozen=True)
class PairScore:
    i: int
    j: int
    w: float


@dataclass
class GenerationRecord:
    generation: int
    d_loss: float
    offspring: list[tuple[str, float]]
    pairs: list[PairScore]
    crossover_pairs: list[tuple[int, int]]
    selected: list[str]
    selected_index: list[int]
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class EvolutionState:
    config: EvolutionConfig
    gen_spec: MlpSpec
    disc_spec: MlpSpec
    dataset: DatasetSpec
    noise: NoiseSpec
    omega: np.ndarray
    adam_omega: AdamState
    parents: list[Individual]
    rngs: RngStreams
    generation: int = 0
    log: list[GenerationRecord] = field(default_factory=list)
    centers: np.ndarray | None = None


def init_state(config: EvolutionConfig, gen_spec: MlpSpec, disc_spec: MlpSpec,
               dataset: DatasetSpec, noise: NoiseSpec) -> EvolutionState:
    check_discriminator_spec(disc_spec)
    c = centers(dataset)
    if gen_spec.in_dim != noise.dim:
        raise ValueError(f"generator input width {gen_spec.in_dim} != noise dimension {noise.dim}")
    if gen_spec.out_dim != c.shape[1] or disc_spec.in_dim != c.shape[1]:
        raise ValueError("generator output / discriminator input must match the data dimension")
    omega = init_params(disc_spec, [config.seed, 0])
    parents = [Individual(init_params(gen_spec, [config.seed, 1, j]), AdamState.zeros(gen_spec.n_params))
               for j in range(config.mu)]
    return EvolutionState(config, gen_spec, disc_spec, dataset, noise, omega,
                          AdamState.zeros(disc_spec.n_params), parents,
                          RngStreams.from_seed(config.seed), centers=c)


def _failed(parent: Individual, lineage: str) -> Individual:
    child = parent.fresh_copy(lineage)
    child.failed = True
    child.fitness = -math.inf
    return child


def mutate(parent: Individual, kind: str, omega: np.ndarray, z: np.ndarray, gen_spec: MlpSpec,
           disc_spec: MlpSpec, config: EvolutionConfig, parent_index: int = 0) -> Individual:
    """One Adam step of the parent on a mutation loss; the parent is untouched."""
    lineage = f"{kind}@{parent_index}"
    tape = Tape()
    layers = bind_params(tape, parent.params, gen_spec, "g")
    fake = generator_forward(tape, layers, gen_spec, tape.const(z))
    _, D = discriminator_forward(tape, const_params(tape, omega, disc_spec), disc_spec, fake)
    loss = mutation_loss(tape, kind, D)
    if not np.isfinite(loss.value):
        return _failed(parent, lineage)
    g = flat_grad(backward(tape, loss), gen_spec, "g")
    try:
        params, adam = adam_step(parent.params, g, parent.adam, config.alpha, config.beta1, config.beta2)
    except NonFiniteGradient:
        return _failed(parent, lineage)
    return Individual(params, adam, lineage)


def evaluate(ind: Individual, omega: np.ndarray, noise: np.ndarray, gen_spec: MlpSpec,
             disc_spec: MlpSpec, config: EvolutionConfig, real: np.ndarray | None = None) -> Individual:
    """Score ``ind`` on the shared evaluation batch, caching samples and logits."""
    if ind.failed:
        ind.fitness = -math.inf
        return ind
    samples = generate(ind.params, gen_spec, noise)
    C = critic(omega, disc_spec, samples)
    report = report_from_samples(config.fitness, omega, disc_spec, samples, C, real, config.gamma)
    ind.cached_samples, ind.cached_C, ind.report = samples, C, report
    ind.fitness = report.combined if np.isfinite(report.combined) else -math.inf
    if not np.isfinite(report.combined):
        ind.failed = True
    return ind


def score_pairs(offspring: list[Individual]) -> list[PairScore]:
    """Every unordered pair of non-failed offspring, best pair-sum first.

    Ties fall to the pair with the higher individual fitness, then to the
    lexicographically smaller index pair.
    """
    if any(o.fitness is None for o in offspring):
        raise ValueError("all offspring must be evaluated before pairing")
    live = [k for k, o in enumerate(offspring) if not o.failed and np.isfinite(o.fitness)]
    scored = []
    for a, i in enumerate(live):
        for j in live[a + 1:]:
            fi, fj = offspring[i].fitness, offspring[j].fitness
            scored.append((-(fi + fj), -max(fi, fj), i, j, fi + fj))
    scored.sort()
    return [PairScore(i, j, w) for _, _, i, j, w in scored]


@dataclass
class DistillationTask:
    """Fixed C-filtered imitation targets for one crossover."""

    noise: np.ndarray
    x_out: np.ndarray
    y_out: np.ndarray
    C_x: np.ndarray
    C_y: np.ndarray
    tie_policy: str = "x"
    normalize: bool = True

    def loss_and_grad(self, params: np.ndarray, gen_spec: MlpSpec) -> tuple[float, np.ndarray]:
        tape = Tape()
        layers = bind_params(tape, params, gen_spec, "g")
        out = generator_forward(tape, layers, gen_spec, tape.const(self.noise))
        loss = distillation_loss(tape, out, self.x_out, self.y_out, self.C_x, self.C_y,
                                 self.tie_policy, self.normalize)
        return float(loss.value), flat_grad(backward(tape, loss), gen_spec, "g")

    def loss(self, params: np.ndarray, gen_spec: MlpSpec) -> float:
        return self.loss_and_grad(params, gen_spec)[0]

    def run(self, params: np.ndarray, adam: AdamState, steps: int, gen_spec: MlpSpec,
            config: EvolutionConfig) -> tuple[np.ndarray, AdamState, list[float]]:
        """``steps`` Adam updates; returns the loss before each update and after the last."""
        history = []
        for _ in range(steps):
            value, g = self.loss_and_grad(params, gen_spec)
            history.append(value)
            params, adam = adam_step(params, g, adam, config.alpha, config.beta1, config.beta2)
        history.append(self.loss(params, gen_spec))
        return params, adam, history


def crossover_task(x: Individual, y: Individual, omega: np.ndarray, noise: np.ndarray,
                   gen_spec: MlpSpec, disc_spec: MlpSpec, config: EvolutionConfig,
                   basis_is_x: bool) -> DistillationTask:
    def outputs(ind):
        if ind.cached_samples is not None and ind.cached_C is not None \
                and len(ind.cached_samples) == len(noise):
            return ind.cached_samples, ind.cached_C
        s = generate(ind.params, gen_spec, noise)
        return s, critic(omega, disc_spec, s)

    x_out, C_x = outputs(x)
    y_out, C_y = outputs(y)
    if config.tie_policy == "none":
        tie = "none"
    else:
        tie = "x" if basis_is_x else "y"
    return DistillationTask(noise, x_out, y_out, C_x, C_y, tie, config.distill_normalize)


def basis_is_first(x: Individual, y: Individual, config: EvolutionConfig) -> bool:
    """Whether ``x`` seeds the child. Equal fitness picks ``x`` (the lower index)."""
    if x.fitness is None or y.fitness is None:
        raise ValueError("crossover parents must be evaluated")
    if config.crossover_basis == "better":
        return x.fitness >= y.fitness
    return x.fitness <= y.fitness


def crossover(x: Individual, y: Individual, omega: np.ndarray, noise: np.ndarray,
              gen_spec: MlpSpec, disc_spec: MlpSpec, config: EvolutionConfig,
              x_index: int = 0, y_index: int = 1) -> Individual:
    """C-filtered distillation child of ``x`` and ``y``; parents are untouched."""
    first = basis_is_first(x, y, config)
    basis = x if first else y
    lineage = f"crossover@{x_index}+{y_index}"
    task = crossover_task(x, y, omega, noise, gen_spec, disc_spec, config, first)
    try:
        params, adam, _ = task.run(basis.params.copy(), basis.adam.copy(), config.k_cross, gen_spec, config)
    except NonFiniteGradient:
        return _failed(basis, lineage)
    return Individual(params, adam, lineage)


def select(pool: list[Individual], mu: int) -> list[int]:
    """Indices of the ``mu`` fittest pool members; ties keep pool (lineage) order."""
    if len(pool) < mu:
        raise ValueError(f"selection pool of {len(pool)} cannot supply {mu} parents")
    if any(p.fitness is None for p in pool):
        raise ValueError("all candidates must be evaluated before selection")
    if all(p.failed or not np.isfinite(p.fitness) for p in pool):
        raise EvolutionAborted("every offspring failed (non-finite losses or gradients)")
    order = sorted(range(len(pool)), key=lambda k: (-pool[k].fitness, k))
    return order[:mu]


def _pmap(workers: int, fn, items):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def discriminator_update(state: EvolutionState) -> float:
    cfg = state.config
    chunk = cfg.m // cfg.mu
    real = sample_real(state.dataset, cfg.m, state.rngs.data, state.centers)
    z = sample_noise(state.noise, cfg.m, state.rngs.noise)
    fakes = [generate(p.params, state.gen_spec, z[j * chunk:(j + 1) * chunk])
             for j, p in enumerate(state.parents)]
    tape = Tape()
    layers = bind_params(tape, state.omega, state.disc_spec, "d")
    loss = d_loss(tape, layers, state.disc_spec, real, fakes)
    if cfg.gp:
        loss = tape.add(loss, gp_term(tape, layers, state.disc_spec, real, np.concatenate(fakes),
                                      cfg.gp_lambda, state.rngs.aux))
    g = flat_grad(backward(tape, loss), state.disc_spec, "d")
    state.omega, state.adam_omega = adam_step(state.omega, g, state.adam_omega,
                                              cfg.alpha, cfg.beta1, cfg.beta2)
    return float(loss.value)


def evolutionary_step(state: EvolutionState) -> EvolutionState:
    cfg = state.config
    gs, ds = state.gen_spec, state.disc_spec
    timings = {}

    t = time.perf_counter()
    d_losses = [discriminator_update(state) for _ in range(cfg.n_d)]
    timings["discriminator"] = time.perf_counter() - t

    t = time.perf_counter()
    omega = state.omega
    eval_noise = sample_noise(state.noise, cfg.n, state.rngs.noise)
    eval_real = (sample_real(state.dataset, cfg.n, state.rngs.data, state.centers)
                 if cfg.fitness == "egan" else None)
    jobs = []
    for j, parent in enumerate(state.parents):
        z = sample_noise(state.noise, cfg.m, state.rngs.noise)
        jobs.extend((j, parent, kind, z) for kind in cfg.mutations)

    def mutate_and_score(job):
        j, parent, kind, z = job
        child = mutate(parent, kind, omega, z, gs, ds, cfg, j)
        return evaluate(child, omega, eval_noise, gs, ds, cfg, eval_real)

    offspring = _pmap(cfg.workers, mutate_and_score, jobs)
    timings["mutation"] = time.perf_counter() - t

    t = time.perf_counter()
    pairs = score_pairs(offspring)
    chosen = [(p.i, p.j) for p in pairs[:cfg.n_c]]

    def cross_and_score(ij):
        i, j = ij
        child = crossover(offspring[i], offspring[j], omega, eval_noise, gs, ds, cfg, i, j)
        return evaluate(child, omega, eval_noise, gs, ds, cfg, eval_real)

    children = _pmap(cfg.workers, cross_and_score, chosen)
    timings["crossover"] = time.perf_counter() - t

    t = time.perf_counter()
    pool = offspring + children
    picked = select(pool, cfg.mu)
    state.parents = [pool[k].fresh_copy() for k in picked]
    for new, k in zip(state.parents, picked):
        new.fitness = pool[k].fitness
    timings["selection"] = time.perf_counter() - t

    state.log.append(GenerationRecord(
        generation=state.generation,
        d_loss=float(np.mean(d_losses)),
        offspring=[(o.lineage, float(o.fitness)) for o in pool],
        pairs=pairs,
        crossover_pairs=chosen,
        selected=[pool[k].lineage for k in picked],
        selected_index=picked,
        timings=timings,
    ))
    state.generation += 1
    return state


def best_parent(state: EvolutionState) -> Individual:
    """Parents are kept in selection order, so the first is the fittest."""
    return state.parents[0]
