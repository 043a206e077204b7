"""Experiment orchestration: training runs, checkpoint evaluation, multi-config comparison.

Output files (all UTF-8 CSV with ``#``-prefixed comment lines, the first
being ``#schema=...``):

``log.csv``
    one row per generation; byte-identical across reruns of a config.
``metrics.csv``
    every ``log_every`` generations: coverage of the best parent plus the
    per-operator selection counts over the preceding window.
``timings.csv``
    wall time per phase; excluded from the determinism guarantee.
``samples.csv`` / ``final.csv``
    samples from the final best parent and their coverage report.
``checkpoints/``
    ``gen{G}_parent{j}.ceg`` and ``gen{G}_disc.ceg`` in the binary CEG1 format.
"""

from __future__ import annotations

import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config as config_io
from .config import RunConfig
from .data import DatasetSpec, NoiseSpec, centers, sample_noise
from .evolution import (EvolutionAborted, EvolutionState, GenerationRecord, evolutionary_step,
                        init_state)
from .metrics import OPERATORS, CoverageReport, mode_coverage, operator_selection_stats
from .nets import Checkpoint, MlpSpec, generate, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

LOG_SCHEMA = "#schema=cegan-log/1"
METRICS_SCHEMA = "#schema=cegan-metrics/1"
TIMINGS_SCHEMA = "#schema=cegan-timings/1"
SAMPLES_SCHEMA = "#schema=cegan-samples/1"
COMPARE_SCHEMA = "#schema=cegan-compare/1"

LOG_COLUMNS = "generation,d_loss,offspring,pairs,crossover_pairs,selected"
METRICS_COLUMNS = "generation,modes_covered,high_quality_ratio," + ",".join(OPERATORS) + ",per_mode_counts"
METRIC_STREAM = 0xE7A1


def default_output_root() -> Path:
    return Path(os.environ.get("CEGAN_OUTPUT_DIR", "runs"))


def metric_rng(seed: int, generation: int) -> np.random.Generator:
    """Noise stream for coverage metrics, independent of the training streams."""
    return np.random.default_rng([int(seed), int(generation), METRIC_STREAM])


def _f(x: float) -> str:
    return repr(float(x))


def format_log_row(rec: GenerationRecord) -> str:
    offspring = ";".join(f"{lin}:{_f(fit)}" for lin, fit in rec.offspring)
    pairs = ";".join(f"{p.i}-{p.j}:{_f(p.w)}" for p in rec.pairs)
    cross = ";".join(f"{i}-{j}" for i, j in rec.crossover_pairs)
    selected = ";".join(rec.selected)
    return f"{rec.generation},{_f(rec.d_loss)},{offspring},{pairs},{cross},{selected}"


@dataclass
class LogRow:
    generation: int
    d_loss: float
    offspring: list[tuple[str, float]]
    pairs: list[tuple[int, int, float]]
    crossover_pairs: list[tuple[int, int]]
    selected: list[str]


def parse_log_row(line: str) -> LogRow:
    gen, dl, off, pairs, cross, sel = line.rstrip("\n").split(",")

    def items(s):
        return [x for x in s.split(";") if x]

    offspring = [(lin, float(fit)) for lin, fit in (x.rsplit(":", 1) for x in items(off))]
    parsed_pairs = []
    for x in items(pairs):
        ij, w = x.split(":")
        i, j = ij.split("-")
        parsed_pairs.append((int(i), int(j), float(w)))
    cross_pairs = [tuple(int(k) for k in x.split("-")) for x in items(cross)]
    return LogRow(int(gen), float(dl), offspring, parsed_pairs, cross_pairs, items(sel))


def read_csv_rows(path) -> list[str]:
    return [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln and not ln.startswith("#")][1:]


def read_log(path) -> list[LogRow]:
    return [parse_log_row(line) for line in read_csv_rows(path)]


class TrainingLog:
    """Append-only CSV log, flushed after every generation."""

    def __init__(self, path, schema: str, columns: str):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._fh.write(f"{schema}\n{columns}\n")
        self._fh.flush()
        self.rows = 0

    def append(self, line: str) -> None:
        self._fh.write(line + "\n")
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        self._fh.close()


def write_samples(path, samples: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{SAMPLES_SCHEMA}\nx,y\n")
        for x, y in samples:
            fh.write(f"{_f(x)},{_f(y)}\n")


def coverage_row(generation: int, rep: CoverageReport, counts=None) -> str:
    counts = counts or {}
    ops = ",".join(str(counts.get(op, 0)) for op in OPERATORS)
    per_mode = ";".join(str(c) for c in rep.per_mode_counts)
    return f"{generation},{rep.modes_covered},{_f(rep.high_quality_ratio)},{ops},{per_mode}"


def generator_coverage(theta: np.ndarray, spec: MlpSpec, noise: NoiseSpec, dataset: DatasetSpec,
                       count: int, rng: np.random.Generator, min_count: int = 20):
    samples = generate(theta, spec, sample_noise(noise, count, rng))
    return samples, mode_coverage(samples, centers(dataset), dataset.sigma, min_count)


def save_state_checkpoints(state: EvolutionState, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    g = state.generation
    meta = {"generation": g, "seed": state.config.seed, "noise_family": state.noise.family}
    paths = []
    for j, parent in enumerate(state.parents):
        p = directory / f"gen{g:06d}_parent{j}.ceg"
        save_checkpoint(p, Checkpoint(state.gen_spec, parent.params, parent.adam,
                                      {**meta, "role": f"parent{j}", "lineage": parent.lineage}))
        paths.append(p)
    p = directory / f"gen{g:06d}_disc.ceg"
    save_checkpoint(p, Checkpoint(state.disc_spec, state.omega, state.adam_omega, {**meta, "role": "disc"}))
    paths.append(p)
    return paths


@dataclass
class RunArtifacts:
    output_dir: Path
    log_path: Path
    metrics_path: Path
    samples_path: Path
    completed: bool
    generations: int
    final_report: CoverageReport | None = None
    checkpoints: list[Path] = field(default_factory=list)
    error: str = ""
    state: EvolutionState | None = None


def resolve_output_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir) if cfg.output_dir else default_output_root() / cfg.name


def run_training(cfg: RunConfig, keep_state: bool = False) -> RunArtifacts:
    """Train for ``cfg.evolution.iterations`` generations, writing every artifact under the output dir."""
    cfg.validate()
    out = resolve_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_io.dumps(cfg), encoding="utf-8")
    ckpt_dir = out / "checkpoints"
    state = init_state(cfg.evolution, cfg.generator, cfg.discriminator, cfg.dataset, cfg.noise)
    seed = cfg.evolution.seed

    checkpoints = save_state_checkpoints(state, ckpt_dir)
    train_log = TrainingLog(out / "log.csv", LOG_SCHEMA, LOG_COLUMNS)
    metrics = TrainingLog(out / "metrics.csv", METRICS_SCHEMA, METRICS_COLUMNS)
    timings = TrainingLog(out / "timings.csv", TIMINGS_SCHEMA,
                          "generation,discriminator,mutation,crossover,selection")
    completed, error = True, ""
    window_start = 0
    try:
        for _ in range(cfg.evolution.iterations):
            evolutionary_step(state)
            rec = state.log[-1]
            train_log.append(format_log_row(rec))
            timings.append(f"{rec.generation}," + ",".join(
                f"{rec.timings.get(k, 0.0):.6f}" for k in ("discriminator", "mutation", "crossover", "selection")))
            g = state.generation
            if g % cfg.log_every == 0:
                _, rep = generator_coverage(state.parents[0].params, cfg.generator, cfg.noise, cfg.dataset,
                                            cfg.metric_samples, metric_rng(seed, g), cfg.min_count)
                counts = operator_selection_stats(state.log[window_start:])
                metrics.append(coverage_row(g, rep, counts))
                window_start = len(state.log)
            if cfg.checkpoint_every and g % cfg.checkpoint_every == 0:
                checkpoints += save_state_checkpoints(state, ckpt_dir)
    except EvolutionAborted as exc:
        completed, error = False, str(exc)
        log.error("run aborted at generation %d: %s", state.generation, exc)
    finally:
        train_log.close()
        metrics.close()
        timings.close()

    if not cfg.checkpoint_every or state.generation % cfg.checkpoint_every:
        checkpoints += save_state_checkpoints(state, ckpt_dir)
    samples, final = generator_coverage(state.parents[0].params, cfg.generator, cfg.noise, cfg.dataset,
                                        cfg.metric_samples, metric_rng(seed, state.generation), cfg.min_count)
    write_samples(out / "samples.csv", samples)
    with open(out / "final.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{METRICS_SCHEMA}\n{METRICS_COLUMNS}\n")
        fh.write(coverage_row(state.generation, final, operator_selection_stats(state.log)
                              if state.log else None) + "\n")
    return RunArtifacts(out, out / "log.csv", out / "metrics.csv", out / "samples.csv", completed,
                        state.generation, final, checkpoints, error, state if keep_state else None)


def evaluate(checkpoint, dataset: DatasetSpec, n: int, seed: int | None = None,
             samples_path=None, noise_family: str | None = None, min_count: int = 20) -> CoverageReport:
    """Coverage of ``n`` samples from a generator checkpoint.

    Without ``seed`` the noise stream recorded in the checkpoint is used, which
    reproduces the in-run metric for that generation.
    """
    ckpt = load_checkpoint(checkpoint)
    if ckpt.meta.get("role") == "disc":
        raise ValueError(f"{checkpoint} is a discriminator checkpoint")
    if ckpt.spec.out_dim != centers(dataset).shape[1]:
        raise ValueError(f"generator output width {ckpt.spec.out_dim} does not match the dataset dimension")
    if seed is None:
        rng = metric_rng(int(ckpt.meta.get("seed", 0)), int(ckpt.meta.get("generation", 0)))
    else:
        rng = np.random.default_rng(seed)
    noise = NoiseSpec(ckpt.spec.in_dim, noise_family or ckpt.meta.get("noise_family", "standard_normal"))
    samples, rep = generator_coverage(ckpt.params, ckpt.spec, noise, dataset, n, rng, min_count)
    if samples_path is not None:
        write_samples(samples_path, samples)
    return rep


@dataclass
class CompareRow:
    name: str
    runs: int
    modes_mean: float
    modes_sd: float
    ratio_mean: float
    ratio_sd: float

    def csv(self) -> str:
        return (f"{self.name},{self.runs},{_f(self.modes_mean)},{_f(self.modes_sd)},"
                f"{_f(self.ratio_mean)},{_f(self.ratio_sd)}")


def _run_one(cfg: RunConfig) -> tuple[int, float, bool]:
    art = run_training(cfg)
    return art.final_report.modes_covered, art.final_report.high_quality_ratio, art.completed


def compare(configs: list[RunConfig], seeds: list[int], output_dir=None, workers: int = 1) -> list[CompareRow]:
    """Run every config on every seed and aggregate final coverage per config."""
    if len(configs) < 2:
        raise ValueError("compare needs at least two configs")
    if not seeds:
        raise ValueError("compare needs at least one seed")
    if any(c.dataset != configs[0].dataset for c in configs[1:]):
        raise ValueError("all compared configs must share the same dataset")
    root = Path(output_dir) if output_dir else default_output_root() / "compare"
    jobs = []
    for k, cfg in enumerate(configs):
        for s in seeds:
            evo = replace(cfg.evolution, seed=s)
            jobs.append(cfg.replace(evolution=evo, output_dir=str(root / f"{k:02d}_{cfg.name}" / f"seed{s}")))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    rows = []
    for k, cfg in enumerate(configs):
        chunk = results[k * len(seeds):(k + 1) * len(seeds)]
        modes = [float(r[0]) for r in chunk]
        ratios = [r[1] for r in chunk]
        sd = (lambda xs: statistics.stdev(xs) if len(xs) > 1 else 0.0)
        rows.append(CompareRow(cfg.name, len(chunk), statistics.fmean(modes), sd(modes),
                               statistics.fmean(ratios), sd(ratios)))
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "compare.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{COMPARE_SCHEMA}\n#seeds={','.join(str(s) for s in seeds)}\n")
        fh.write("name,runs,modes_mean,modes_sd,ratio_mean,ratio_sd\n")
        for r in rows:
            fh.write(r.csv() + "\n")
    return rows


