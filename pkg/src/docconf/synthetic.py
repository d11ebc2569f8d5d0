"""Synthetic ground truth and a corruptible stand-in detector.

A synthetic prediction is produced by painting a probability map from the
ground truth and running the regular post-processing on it. Corruption is
controlled by a severity in [0, 1] and an error mixture: boundary jitter
(grow/shrink and shift), fragmentation (a background cut across an object),
misses, and spurious blobs. Object probabilities drift toward 0.5 as severity
grows.

Random draws are made in a fixed pattern regardless of severity, so for a
fixed seed raising the severity only ever worsens the same corruption.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import cv2
import numpy as np

from .estimators import DropoutEnsemble
from .geometry import Rect, rasterize, rect_polygon
from .metrics import GroundTruth
from .postprocess import PostprocessConfig, Prediction, ProbabilityMap, extract_objects

MAX_BLOBS = 12
_DRAWS_PER_OBJECT = 8


@dataclass(frozen=True)
class ErrorMixture:
    jitter: float = 1.0
    fragment: float = 1.0
    miss: float = 0.3
    spurious: float = 1.0
    max_jitter_px: float = 4.0
    fragment_gap_px: int = 2
    spurious_rate: float = 4.0  # mean blob count at severity 1, weight 1
    blob_size: tuple[int, int] = (7, 12)

    def __post_init__(self):
        for name in ("jitter", "fragment", "miss", "spurious", "max_jitter_px", "spurious_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.fragment_gap_px < 1:
            raise ValueError("fragment_gap_px must be >= 1")
        lo, hi = self.blob_size
        if not 1 <= lo <= hi:
            raise ValueError("blob_size must satisfy 1 <= lo <= hi")


@dataclass(frozen=True)
class SyntheticDetectorConfig:
    """Detector quality as a function of (effective) labelled images.

    ``quality(n) = q_min + (q_max - q_min) * (1 - exp(-n / kappa))``; an
    image of difficulty ``d`` is predicted at severity ``d * (1 - quality)``.
    Difficulties follow ``Beta(difficulty_a, difficulty_b)``.
    """

    q_min: float = 0.3
    q_max: float = 0.95
    kappa: float = 60.0
    difficulty_a: float = 0.5
    difficulty_b: float = 3.0
    mixture: ErrorMixture = field(default_factory=ErrorMixture)
    dropout_scale: float = 1.0
    ensemble_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q_min <= self.q_max <= 1.0:
            raise ValueError("need 0 <= q_min <= q_max <= 1")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.difficulty_a <= 0 or self.difficulty_b <= 0:
            raise ValueError("difficulty parameters must be > 0")
        if self.dropout_scale < 0:
            raise ValueError("dropout_scale must be >= 0")
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be >= 2")

    def quality(self, n_labels: float) -> float:
        return self.q_min + (self.q_max - self.q_min) * (1.0 - np.exp(-n_labels / self.kappa))


@dataclass(frozen=True)
class CorpusConfig:
    height: int = 64
    width: int = 80
    layout: str = "pages"  # "pages" (1-2 large objects) or "lines"

    def __post_init__(self):
        if self.layout not in ("pages", "lines"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.height < 24 or self.width < 24:
            raise ValueError("synthetic images must be at least 24x24")


def id_key(image_id: str) -> int:
    return zlib.crc32(image_id.encode("utf-8"))


def make_rng(*key) -> np.random.Generator:
    """Generator keyed by a tuple of ints and/or strings."""
    ints = [id_key(k) if isinstance(k, str) else int(k) & 0xFFFFFFFFFFFFFFFF for k in key]
    return np.random.default_rng(ints)


def _page_objects(cfg: CorpusConfig, rng: np.random.Generator) -> list[Rect]:
    H, W = cfg.height, cfg.width
    top = int(rng.integers(2, max(3, H // 8)))
    bottom = H - 1 - int(rng.integers(2, max(3, H // 8)))
    left = int(rng.integers(2, max(3, W // 10)))
    right = W - 1 - int(rng.integers(2, max(3, W // 10)))
    if rng.random() < 0.35:
        gutter = int(rng.integers(3, 6))
        mid = (left + right) // 2 + int(rng.integers(-2, 3))
        return [Rect(left, top, mid - gutter // 2 - 1, bottom), Rect(mid + (gutter + 1) // 2, top, right, bottom)]
    return [Rect(left, top, right, bottom)]


def _line_objects(cfg: CorpusConfig, rng: np.random.Generator) -> list[Rect]:
    H, W = cfg.height, cfg.width
    rects = []
    y = int(rng.integers(2, 6))
    while len(rects) < 8:
        h = int(rng.integers(5, 9))
        if y + h >= H - 2:
            break
        x0 = int(rng.integers(2, W // 5))
        x1 = W - 1 - int(rng.integers(2, W // 3))
        if (x1 - x0 + 1) * h >= 60:
            rects.append(Rect(x0, y, x1, y + h - 1))
        y += h + int(rng.integers(3, 7))
    return rects


def make_ground_truth(image_id: str, cfg: CorpusConfig, seed: int) -> GroundTruth:
    rng = make_rng(seed, "gt", image_id)
    rects = _page_objects(cfg, rng) if cfg.layout == "pages" else _line_objects(cfg, rng)
    return GroundTruth(image_id, cfg.height, cfg.width, tuple(rect_polygon(r) for r in rects))


def _shift(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(mask)
    H, W = mask.shape
    src = mask[max(0, -dy) : H - max(0, dy), max(0, -dx) : W - max(0, dx)]
    out[max(0, dy) : max(0, dy) + src.shape[0], max(0, dx) : max(0, dx) + src.shape[1]] = src
    return out


_SQUARE = np.ones((3, 3), dtype=np.uint8)


def _jitter(mask: np.ndarray, grow: int, dx: int, dy: int) -> np.ndarray:
    # Pixels outside the image count as background for both operations.
    if grow:
        op = cv2.dilate if grow > 0 else cv2.erode
        out = op(mask.view(np.uint8), _SQUARE, iterations=abs(grow),
                 borderType=cv2.BORDER_CONSTANT, borderValue=0)
        mask = out.view(bool)
    if dx or dy:
        mask = _shift(mask, dx, dy)
    return mask


def _cut(mask: np.ndarray, where: float, gap: int) -> np.ndarray:
    """Clear a ``gap``-wide band across the longer side of the object."""
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return mask
    mask = mask.copy()
    r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
    if c1 - c0 >= r1 - r0:
        pos = c0 + int((0.2 + 0.6 * where) * (c1 - c0))
        mask[:, pos : pos + gap] = False
    else:
        pos = r0 + int((0.2 + 0.6 * where) * (r1 - r0))
        mask[pos : pos + gap, :] = False
    return mask


def _poisson_quantile(u: float, lam: float, cap: int) -> int:
    """Smallest k with CDF(k) >= u, capped; monotone in ``lam`` for fixed ``u``."""
    if lam <= 0:
        return 0
    pmf = math.exp(-lam)
    cdf = pmf
    k = 0
    while cdf < u and k < cap:
        k += 1
        pmf *= lam / k
        cdf += pmf
    return k


def _object_masks(gt: GroundTruth) -> list[np.ndarray]:
    key = ("masks", gt.height, gt.width)
    if key not in gt._cache:
        masks = [rasterize(p, gt.height, gt.width).bits for p in gt.objects]
        for m in masks:
            m.setflags(write=False)
        gt._cache[key] = masks
    return gt._cache[key]


def synthesize_map(
    gt: GroundTruth,
    severity: float,
    mixture: ErrorMixture,
    rng: np.random.Generator,
) -> ProbabilityMap:
    s = float(np.clip(severity, 0.0, 1.0))
    H, W = gt.height, gt.width
    prob = np.zeros((H, W))
    amp = mixture.jitter * s * mixture.max_jitter_px
    for mask in _object_masks(gt):
        u = rng.random(_DRAWS_PER_OBJECT)
        if u[0] < min(1.0, mixture.miss * s):
            continue
        grow, dx, dy = (int(np.rint(amp * (2.0 * v - 1.0))) for v in u[1:4])
        mask = _jitter(mask, grow, dx, dy)
        if u[4] < min(1.0, mixture.fragment * s):
            mask = _cut(mask, u[5], mixture.fragment_gap_px)
        level = 1.0 - 0.45 * s * (0.5 + 0.5 * u[6])
        prob[mask] = np.maximum(prob[mask], level)

    u = rng.random(1 + 5 * MAX_BLOBS)
    lam = mixture.spurious * s * mixture.spurious_rate
    n_blobs = _poisson_quantile(u[0], lam, MAX_BLOBS)
    lo, hi = mixture.blob_size
    for b in range(n_blobs):
        v = u[1 + 5 * b : 6 + 5 * b]
        h = min(H, lo + int(v[0] * (hi - lo + 1)))
        w = min(W, lo + 1 + int(v[1] * (hi - lo + 1)))
        r = int(v[2] * (H - h + 1))
        c = int(v[3] * (W - w + 1))
        region = prob[r : r + h, c : c + w]
        np.maximum(region, 0.5 + 0.4 * v[4], out=region)
    return ProbabilityMap(prob)


def _key(seed) -> tuple:
    return seed if isinstance(seed, tuple) else (seed,)


def perturbed_map(gt: GroundTruth, severity: float, mixture: ErrorMixture = ErrorMixture(), seed=0) -> ProbabilityMap:
    """The probability map behind ``perturb_prediction``."""
    return synthesize_map(gt, severity, mixture, make_rng(*_key(seed), gt.image_id))


def perturb_prediction(
    gt: GroundTruth,
    severity: float,
    mixture: ErrorMixture = ErrorMixture(),
    seed=0,
    postprocess: PostprocessConfig = PostprocessConfig(),
) -> Prediction:
    """One corrupted prediction of ``gt``; ``seed`` may be an int or a key tuple."""
    return extract_objects(perturbed_map(gt, severity, mixture, seed), postprocess, gt.image_id)


def ensemble_maps(
    gt: GroundTruth,
    severity: float,
    n: int,
    mixture: ErrorMixture = ErrorMixture(),
    seed=0,
    dropout_scale: float = 1.0,
) -> list[ProbabilityMap]:
    """Probability maps of ``n`` independently corrupted members."""
    s = min(1.0, severity * dropout_scale)
    return [perturbed_map(gt, s, mixture, (*_key(seed), "member", i)) for i in range(n)]


def perturb_ensemble(
    gt: GroundTruth,
    severity: float,
    n: int,
    mixture: ErrorMixture = ErrorMixture(),
    seed=0,
    dropout_scale: float = 1.0,
    postprocess: PostprocessConfig = PostprocessConfig(),
) -> DropoutEnsemble:
    """``n`` independently corrupted members; spread grows with severity."""
    maps = ensemble_maps(gt, severity, n, mixture, seed, dropout_scale)
    return DropoutEnsemble(gt.image_id, tuple(extract_objects(m, postprocess, gt.image_id) for m in maps))


@dataclass(frozen=True)
class SyntheticCorpus:
    pool: tuple[GroundTruth, ...]
    test: tuple[GroundTruth, ...]
    difficulty: dict = field(default_factory=dict)  # image_id -> d in [0, 1]


def make_corpus(
    n_pool: int,
    n_test: int,
    detector: SyntheticDetectorConfig = SyntheticDetectorConfig(),
    cfg: CorpusConfig = CorpusConfig(),
    seed: int = 0,
) -> SyntheticCorpus:
    if n_pool < 1:
        raise ValueError("corpus pool must contain at least one image")
    pool = tuple(make_ground_truth(f"pool-{i:05d}", cfg, seed) for i in range(n_pool))
    test = tuple(make_ground_truth(f"test-{i:05d}", cfg, seed) for i in range(n_test))
    diff = {
        g.image_id: float(make_rng(seed, "difficulty", g.image_id).beta(detector.difficulty_a, detector.difficulty_b))
        for g in pool + test
    }
    return SyntheticCorpus(pool, test, diff)


def severities(images: Sequence[GroundTruth], seed: int) -> dict:
    """Uniform injected severities, one per image."""
    return {g.image_id: float(make_rng(seed, "severity", g.image_id).random()) for g in images}
