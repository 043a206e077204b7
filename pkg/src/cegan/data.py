"""Synthetic 2-D mixtures and the generator's noise prior."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_KINDS = ("ring8", "grid25", "custom_csv")
NOISE_FAMILIES = ("standard_normal", "uniform_pm1")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "ring8"
    sigma: float = 0.02
    scale: float = 2.0
    csv_path: str = ""

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.sigma <= 0:
            raise ValueError("per-mode sigma must be positive")
        if self.kind == "custom_csv" and not self.csv_path:
            raise ValueError("custom_csv needs csv_path")


def ring8(scale: float = 2.0, sigma: float = 0.02) -> DatasetSpec:
    return DatasetSpec("ring8", sigma, scale)


def grid25(scale: float = 2.0, sigma: float = 0.05) -> DatasetSpec:
    return DatasetSpec("grid25", sigma, scale)


def load_csv_points(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    bad = [i for i, r in enumerate(rows) if len(r) != 2]
    if bad:
        raise ValueError(f"{path}: row {bad[0] + 1} has {len(rows[bad[0]])} columns, expected 2")
    return np.array(rows, dtype=np.float64)


def centers(spec: DatasetSpec) -> np.ndarray:
    if spec.kind == "ring8":
        angles = 2 * np.pi * np.arange(8) / 8
        return spec.scale * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if spec.kind == "grid25":
        ticks = spec.scale * (np.arange(5) - 2.0)
        gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)
    return load_csv_points(spec.csv_path)


def sample_real(spec: DatasetSpec, count: int, rng: np.random.Generator, _centers=None) -> np.ndarray:
    """Uniform mode choice followed by isotropic Gaussian jitter."""
    if count < 1:
        raise ValueError("count must be at least 1")
    c = centers(spec) if _centers is None else _centers
    idx = rng.integers(0, len(c), size=count)
    return c[idx] + spec.sigma * rng.standard_normal((count, c.shape[1]))


@dataclass(frozen=True)
class NoiseSpec:
    dim: int = 8
    family: str = "standard_normal"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("noise dimension must be at least 1")
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"noise family must be one of {NOISE_FAMILIES}")


def sample_noise(spec: NoiseSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be at least 1")
    if spec.family == "standard_normal":
        return rng.standard_normal((count, spec.dim))
    return rng.uniform(-1.0, 1.0, size=(count, spec.dim))


@dataclass
class RngStreams:
    """Independent generators for real data, noise, and everything else."""

    data: np.random.Generator
    noise: np.random.Generator
    aux: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        data, noise, aux = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
        return cls(data, noise, aux)
