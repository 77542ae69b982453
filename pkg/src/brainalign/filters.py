"""Conv1 filter inspection: spectral peakedness and a plot-ready grid.

Peakedness is the ratio of the largest to the mean non-DC 2D Fourier
magnitude of the (channel-averaged, mean-subtracted) kernel. Oriented
periodic structure concentrates energy in few bins and scores high;
unstructured noise scores in the low single digits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError


class Peakedness(NamedTuple):
    score: float
    degenerate: bool


def gabor_peakedness(filt) -> Peakedness:
    """Spectral peak-to-mean ratio of one [C,k,k] (or [k,k]) kernel.

    Channels are averaged to a single map and the mean (DC) is removed
    before the FFT; the DC bin is excluded from both max and mean. A
    constant filter has no non-DC energy and scores 1.0 with the
    degenerate flag set.
    """
    f = np.asarray(filt, dtype=np.float64)
    if f.ndim == 3:
        f = f.mean(axis=0)
    if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] < 2:
        raise ConfigurationError(f"filter must be [C,k,k] or [k,k] with k >= 2, got {f.shape}")
    f = f - f.mean()
    mag = np.abs(np.fft.fft2(f)).ravel()
    non_dc = mag[1:]  # bin (0,0) is ravel index 0
    mean = non_dc.mean()
    if mean == 0.0:
        return Peakedness(score=1.0, degenerate=True)
    return Peakedness(score=float(non_dc.max() / mean), degenerate=False)


@dataclass
class FilterSummary:
    """Per-filter peakedness scores for one condition's first conv layer."""

    rule: str
    scores: np.ndarray            # [num_filters]
    mean: float
    std: float                    # sample std (ddof=1)
    degenerate: np.ndarray        # [num_filters] bool
    grid: np.ndarray              # [min(16, num_filters), C, k, k] in [0,1]


def _minmax_grid(filters: np.ndarray) -> np.ndarray:
    grid = np.empty_like(filters)
    for i, f in enumerate(filters):
        lo, hi = f.min(), f.max()
        grid[i] = (f - lo) / (hi - lo) if hi > lo else np.full_like(f, 0.5)
    return grid


def summarize_filters(state, rule: str = "") -> FilterSummary:
    """Score every conv1 filter and export the first 16 as a min-max
    normalized grid for external plotting."""
    weights = state.conv1.w if hasattr(state, "conv1") else np.asarray(state)
    results = [gabor_peakedness(w) for w in weights]
    scores = np.array([r.score for r in results])
    degenerate = np.array([r.degenerate for r in results])
    std = float(np.std(scores, ddof=1)) if scores.size > 1 else 0.0
    return FilterSummary(rule=rule, scores=scores, mean=float(scores.mean()),
                         std=std, degenerate=degenerate,
                         grid=_minmax_grid(weights[:16]))


def write_filter_scores_csv(summary: FilterSummary, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rule", "filter", "peakedness", "degenerate"])
        for i, (s, d) in enumerate(zip(summary.scores, summary.degenerate)):
            w.writerow([summary.rule, i, repr(float(s)), int(d)])
        w.writerow([summary.rule, "mean", repr(summary.mean), ""])
        w.writerow([summary.rule, "std", repr(summary.std), ""])


def write_filter_grid_csv(summary: FilterSummary, path) -> None:
    """One row per exported filter: index then the [C,k,k] values flattened
    row-major."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        c, k = summary.grid.shape[1], summary.grid.shape[2]
        w.writerow(["filter"] + [f"v{j}" for j in range(c * k * k)])
        for i, g in enumerate(summary.grid):
            w.writerow([i] + [repr(float(v)) for v in g.ravel()])
