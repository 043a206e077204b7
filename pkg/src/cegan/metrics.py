"""Mode coverage on 2-D mixtures and operator-selection accounting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

OPERATORS = ("minimax", "heuristic", "least_squares", "crossover")


@dataclass
class CoverageReport:
    modes_covered: int
    per_mode_counts: list[int]
    high_quality_ratio: float

    @property
    def n_modes(self) -> int:
        return len(self.per_mode_counts)


def mode_coverage(samples: np.ndarray, centers: np.ndarray, sigma: float, min_count: int = 20,
                  threshold: float = 3.0) -> CoverageReport:
    """Assign each sample to its nearest center; it counts as high quality
    within ``threshold * sigma`` of that center."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or len(samples) < 1:
        raise ValueError("need a non-empty 2-D sample array")
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    dist = np.sqrt(d2[np.arange(len(samples)), nearest])
    good = dist <= threshold * sigma
    counts = np.bincount(nearest[good], minlength=len(centers))
    return CoverageReport(
        modes_covered=int((counts >= min_count).sum()),
        per_mode_counts=[int(c) for c in counts],
        high_quality_ratio=float(good.mean()),
    )


def operator_of(lineage: str) -> str:
    """Operator tag of a lineage string such as ``heuristic@0`` or ``crossover@1+2``."""
    return lineage.split("@", 1)[0]


def operator_selection_stats(records, window: int | None = None):
    """Count how often each operator produced a selected parent.

    ``records`` is a sequence of log records (anything with a ``selected``
    list of lineage strings). Without ``window`` returns one Counter over the
    whole log; with it, a list of Counters, one per consecutive window.
    """
    records = list(records)
    if not records:
        raise ValueError("empty training log")

    def count(chunk):
        c = Counter({op: 0 for op in OPERATORS})
        for rec in chunk:
            c.update(operator_of(s) for s in rec.selected)
        return c

    if window is None:
        return count(records)
    return [count(records[i:i + window]) for i in range(0, len(records), window)]
