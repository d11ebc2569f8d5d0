"""Reject curves, bootstrap bands and the random-rejection baseline.

A reject curve sweeps a confidence threshold; at each threshold the images
judged less confident than it (strictly) are removed and the metric is
averaged over the rest. Curves from resampled sets, whose rejection rates
differ, are aligned by step interpolation on a common rejection-rate grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimators import ConfidenceScore
from .metrics import AlignmentError, ImageScore

RATE_STEP = 0.01
_RATE_EPS = 1e-9


@dataclass(frozen=True)
class RejectPoint:
    threshold: float
    rejection_rate: float
    metric: float
    n_remaining: int


@dataclass(frozen=True)
class RejectCurve:
    estimator: str
    points: tuple[RejectPoint, ...]

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rejection_rate for p in self.points])

    @property
    def metrics(self) -> np.ndarray:
        return np.array([p.metric for p in self.points])


@dataclass(frozen=True, eq=False)
class CurveBand:
    rates: np.ndarray
    p10: np.ndarray
    median: np.ndarray
    p90: np.ndarray
    n_curves: np.ndarray  # curves defined at each grid point


def dap_grid() -> list[float]:
    """0 to 1 in steps of 0.05."""
    return [round(0.05 * i, 2) for i in range(21)]


def dov_grid() -> list[float]:
    """10 down to 0 in steps of -1."""
    return [float(v) for v in range(10, -1, -1)]


def rank_grid(scores: Sequence[ConfidenceScore]) -> list[float]:
    """Every distinct score, ordered so rejection grows along the sweep."""
    values = sorted({s.value for s in scores})
    if scores and not scores[0].higher_is_confident:
        values.reverse()
    return values


def rate_grid(step: float = RATE_STEP) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.round(np.arange(n + 1) * step, 10)


def _aligned(scores: Sequence[ConfidenceScore], image_scores: Sequence[ImageScore], metric: str):
    if not scores:
        raise ValueError("no confidence scores")
    by_id = {s.image_id: s for s in image_scores}
    conf_ids = [s.image_id for s in scores]
    missing = [i for i in conf_ids if i not in by_id]
    extra = sorted(set(by_id) - set(conf_ids))
    if missing or extra:
        raise AlignmentError(f"unaligned image ids: no score for {missing}, no confidence for {extra}")
    directions = {s.higher_is_confident for s in scores}
    if len(directions) > 1:
        raise ValueError("confidence scores mix rejection directions")
    conf = np.array([s.value for s in scores], dtype=np.float64)
    perf = np.array([getattr(by_id[i], metric) for i in conf_ids], dtype=np.float64)
    return conf, perf, directions.pop()


def _sweep(conf: np.ndarray, perf: np.ndarray, higher: bool, grid: Sequence[float]):
    """Rows of (threshold, rate, metric, n_remaining); empty remainders skipped."""
    n = len(conf)
    rows = []
    for t in grid:
        keep = conf >= t if higher else conf <= t
        k = int(keep.sum())
        if k == 0:
            continue
        rows.append((float(t), 1.0 - k / n, float(perf[keep].mean()), k))
    return rows


def reject_curve(
    scores: Sequence[ConfidenceScore],
    image_scores: Sequence[ImageScore],
    grid: Sequence[float],
    metric: str = "map",
) -> RejectCurve:
    if len(grid) == 0:
        raise ValueError("threshold grid is empty")
    conf, perf, higher = _aligned(scores, image_scores, metric)
    name = scores[0].estimator
    name = getattr(name, "value", name)
    return RejectCurve(str(name), tuple(RejectPoint(*r) for r in _sweep(conf, perf, higher, grid)))


def step_interpolate(rates: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Value of the last curve point at or left of each grid rate; NaN before the first.

    ``rates`` must be non-decreasing (points in sweep order).
    """
    rates = np.asarray(rates, dtype=np.float64)
    if len(rates) == 0:
        return np.full(len(grid), np.nan)
    idx = np.searchsorted(rates, np.asarray(grid) + _RATE_EPS, side="right") - 1
    out = np.asarray(values, dtype=np.float64)[np.clip(idx, 0, None)]
    return np.where(idx >= 0, out, np.nan)


def band_from_curves(curves: np.ndarray, grid: np.ndarray) -> CurveBand:
    """Per-grid-point order statistics over the defined (non-NaN) curve values."""
    keep_cols = []
    p10, med, p90, counts = [], [], [], []
    for g in range(curves.shape[1]):
        col = curves[:, g]
        col = col[~np.isnan(col)]
        if len(col) == 0:
            continue
        q = np.percentile(col, [10, 50, 90], method="inverted_cdf")
        keep_cols.append(g)
        p10.append(q[0])
        med.append(q[1])
        p90.append(q[2])
        counts.append(len(col))
    return CurveBand(grid[keep_cols], np.array(p10), np.array(med), np.array(p90), np.array(counts))


def bootstrap_curves(
    scores: Sequence[ConfidenceScore],
    image_scores: Sequence[ImageScore],
    grid: Sequence[float],
    n_resamples: int = 100,
    seed: int = 0,
    metric: str = "map",
    rate_step: float = RATE_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Resampled reject curves on the common rate grid, shape ``(n_resamples, len(rates))``."""
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    conf, perf, higher = _aligned(scores, image_scores, metric)
    rates = rate_grid(rate_step)
    n = len(conf)
    out = np.empty((n_resamples, len(rates)))
    for r in range(n_resamples):
        idx = np.random.default_rng([seed, r]).integers(0, n, size=n)
        rows = _sweep(conf[idx], perf[idx], higher, grid)
        out[r] = step_interpolate([x[1] for x in rows], [x[2] for x in rows], rates)
    return rates, out


def bootstrap_band(
    scores: Sequence[ConfidenceScore],
    image_scores: Sequence[ImageScore],
    grid: Sequence[float],
    n_resamples: int = 100,
    seed: int = 0,
    metric: str = "map",
    rate_step: float = RATE_STEP,
) -> CurveBand:
    rates, curves = bootstrap_curves(scores, image_scores, grid, n_resamples, seed, metric, rate_step)
    return band_from_curves(curves, rates)


def random_curves(
    image_scores: Sequence[ImageScore],
    n_orderings: int = 100,
    seed: int = 0,
    metric: str = "map",
    rate_step: float = RATE_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Metric of the kept set under uniformly random rejection orders."""
    if not image_scores:
        raise ValueError("no image scores")
    perf = np.array([getattr(s, metric) for s in image_scores], dtype=np.float64)
    n = len(perf)
    rates = rate_grid(rate_step)
    removed = np.arange(n)  # k images removed, k = 0 .. n-1
    out = np.empty((n_orderings, len(rates)))
    for r in range(n_orderings):
        order = np.random.default_rng([seed, r]).permutation(n)
        dropped = np.concatenate(([0.0], np.cumsum(perf[order])[:-1]))
        kept_mean = (perf.sum() - dropped) / (n - removed)
        out[r] = step_interpolate(removed / n, kept_mean, rates)
    return rates, out


def random_baseline(
    image_scores: Sequence[ImageScore],
    n_orderings: int = 100,
    seed: int = 0,
    metric: str = "map",
    rate_step: float = RATE_STEP,
) -> CurveBand:
    rates, curves = random_curves(image_scores, n_orderings, seed, metric, rate_step)
    return band_from_curves(curves, rates)


def area_under_curve(curve: RejectCurve) -> float:
    """Trapezoidal area under metric vs rejection rate."""
    if len(curve.points) < 2:
        return 0.0
    r, m = curve.rates, curve.metrics
    return float(np.sum(np.diff(r) * (m[1:] + m[:-1]) / 2.0))
