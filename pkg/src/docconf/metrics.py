"""Pixel IoU and PASCAL-VOC style mean average precision for one image.

Both sides of a comparison are rasterized from their polygons, so a
reference may be a ground truth or another prediction. Predicted objects are
ranked by their mean probability; a reference side ignores its probabilities.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .geometry import Polygon, rasterize_crop
from .postprocess import Prediction

DEFAULT_IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


class DimensionMismatchError(ValueError):
    pass


class AlignmentError(ValueError):
    """Two collections keyed by image id do not cover the same ids."""


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    height: int
    width: int
    objects: tuple[Polygon, ...] = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def __len__(self) -> int:
        return len(self.objects)


Scene = Union[Prediction, GroundTruth]


@dataclass(frozen=True)
class MapConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS

    def __post_init__(self):
        t = tuple(float(x) for x in self.iou_thresholds)
        object.__setattr__(self, "iou_thresholds", t)
        if not t:
            raise ValueError("iou_thresholds must be non-empty")
        if any(not 0.0 < x <= 1.0 for x in t):
            raise ValueError("iou_thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("iou_thresholds must be strictly increasing")


@dataclass(frozen=True)
class ImageScore:
    image_id: str
    pixel_iou: float
    map: float


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome; indices refer to the input object order."""

    true_positives: tuple[tuple[int, int, float], ...]  # (pred, ref, iou)
    false_positives: tuple[int, ...]
    false_negatives: tuple[int, ...]


@dataclass(frozen=True)
class DatasetScores:
    images: tuple[ImageScore, ...]
    mean_iou: float
    mean_map: float


def _polygons(scene: Scene) -> tuple[Polygon, ...]:
    if isinstance(scene, Prediction):
        return tuple(o.polygon for o in scene.objects)
    return scene.objects


def _rasters(scene: Scene) -> list[tuple[int, int, np.ndarray, int]]:
    key = ("rasters", scene.height, scene.width)
    if key not in scene._cache:
        out = []
        for poly in _polygons(scene):
            r0, c0, crop = rasterize_crop(poly, scene.height, scene.width)
            out.append((r0, c0, crop, int(crop.sum())))
        scene._cache[key] = out
    return scene._cache[key]


def _union(scene: Scene) -> np.ndarray:
    key = ("union", scene.height, scene.width)
    if key not in scene._cache:
        bits = np.zeros((scene.height, scene.width), dtype=bool)
        for r0, c0, crop, _ in _rasters(scene):
            if crop.size:
                bits[r0 : r0 + crop.shape[0], c0 : c0 + crop.shape[1]] |= crop
        scene._cache[key] = bits
    return scene._cache[key]


def _check_dims(a: Scene, b: Scene) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(
            f"image size mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def pixel_iou(pred: Scene, ref: Scene) -> float:
    _check_dims(pred, ref)
    a, b = _union(pred), _union(ref)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def object_iou_matrix(pred: Scene, ref: Scene) -> np.ndarray:
    """Pairwise object IoU, shape ``(len(pred), len(ref))``."""
    _check_dims(pred, ref)
    ra, rb = _rasters(pred), _rasters(ref)
    out = np.zeros((len(ra), len(rb)))
    for i, (ar0, ac0, a, acount) in enumerate(ra):
        if not a.size:
            continue
        ar1, ac1 = ar0 + a.shape[0], ac0 + a.shape[1]
        for j, (br0, bc0, b, bcount) in enumerate(rb):
            if not b.size:
                continue
            r0, r1 = max(ar0, br0), min(ar1, br0 + b.shape[0])
            c0, c1 = max(ac0, bc0), min(ac1, bc0 + b.shape[1])
            if r0 >= r1 or c0 >= c1:
                continue
            inter = int(np.count_nonzero(
                a[r0 - ar0 : r1 - ar0, c0 - ac0 : c1 - ac0]
                & b[r0 - br0 : r1 - br0, c0 - bc0 : c1 - bc0]
            ))
            if inter:
                out[i, j] = inter / (acount + bcount - inter)
    return out


def confidence_order(pred: Scene) -> list[int]:
    """Prediction indices by mean probability, then pixel area, descending."""
    if isinstance(pred, GroundTruth):
        areas = [r[3] for r in _rasters(pred)]
        return sorted(range(len(pred)), key=lambda i: (-areas[i], i))
    objs = pred.objects
    return sorted(range(len(objs)), key=lambda i: (-objs[i].mean_prob, -objs[i].pixel_area, i))


def _greedy(iou: list[list[float]], order: Sequence[int], tau: float) -> tuple[list[bool], dict[int, int]]:
    """Match predictions in rank order; returns TP flags (rank order) and pred->ref map.

    Each prediction takes the free reference with the highest IoU (lowest
    index on ties) when that IoU reaches ``tau``.
    """
    free = list(range(len(iou[0]))) if iou else []
    flags = []
    pairs = {}
    for i in order:
        row = iou[i]
        best_j, best = -1, -1.0
        for j in free:
            if row[j] > best:
                best_j, best = j, row[j]
        if best_j >= 0 and best >= tau:
            free.remove(best_j)
            pairs[i] = best_j
            flags.append(True)
        else:
            flags.append(False)
    return flags, pairs


def match_objects(pred: Scene, ref: Scene, tau: float) -> MatchResult:
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    iou = object_iou_matrix(pred, ref)
    order = confidence_order(pred)
    _, pairs = _greedy(iou.tolist(), order, tau)
    tps = tuple((i, pairs[i], float(iou[i, pairs[i]])) for i in order if i in pairs)
    fps = tuple(i for i in order if i not in pairs)
    matched = set(pairs.values())
    fns = tuple(j for j in range(iou.shape[1]) if j not in matched)
    return MatchResult(tps, fps, fns)


def _ap_from_flags(flags: Sequence[bool], n_ref: int) -> float:
    """All-point interpolated AP: sum of recall steps times the precision envelope."""
    precision = []
    recall = []
    tp = 0
    for k, hit in enumerate(flags, start=1):
        tp += hit
        precision.append(tp / k)
        recall.append(tp / n_ref)
    ap = 0.0
    envelope = 0.0
    for k in range(len(flags) - 1, -1, -1):
        envelope = max(envelope, precision[k])
        ap += (recall[k] - (recall[k - 1] if k else 0.0)) * envelope
    return ap


def _aps_from_iou(iou: np.ndarray, order: Sequence[int], thresholds: Sequence[float]) -> list[float]:
    n_pred, n_ref = iou.shape
    if n_pred == 0 and n_ref == 0:
        return [1.0] * len(thresholds)
    if n_pred == 0 or n_ref == 0:
        return [0.0] * len(thresholds)
    rows = iou.tolist()
    # Thresholds falling between the same pair of distinct IoU values give the
    # same matching, so each such group is evaluated once.
    levels = sorted({v for row in rows for v in row})
    memo: dict[int, float] = {}
    out = []
    for tau in thresholds:
        group = bisect.bisect_left(levels, tau)
        if group not in memo:
            memo[group] = _ap_from_flags(_greedy(rows, order, tau)[0], n_ref)
        out.append(memo[group])
    return out


def average_precision(pred: Scene, ref: Scene, tau: float) -> float:
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    return _aps_from_iou(object_iou_matrix(pred, ref), confidence_order(pred), [tau])[0]


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def mean_average_precision(pred: Scene, ref: Scene, cfg: MapConfig = MapConfig()) -> float:
    return _mean(_aps_from_iou(object_iou_matrix(pred, ref), confidence_order(pred), cfg.iou_thresholds))


def map_from_iou(iou: np.ndarray, order: Sequence[int], cfg: MapConfig = MapConfig()) -> float:
    """mAP from a precomputed IoU matrix and prediction rank order."""
    return _mean(_aps_from_iou(iou, order, cfg.iou_thresholds))


def image_score(pred: Scene, ref: Scene, cfg: MapConfig = MapConfig()) -> ImageScore:
    return ImageScore(ref.image_id, pixel_iou(pred, ref), mean_average_precision(pred, ref, cfg))


def dataset_scores(
    preds: Sequence[Scene],
    refs: Sequence[Scene],
    cfg: MapConfig = MapConfig(),
) -> DatasetScores:
    """Per-image scores in prediction order plus unweighted means."""
    by_id = {r.image_id: r for r in refs}
    pred_ids = [p.image_id for p in preds]
    missing_ref = [i for i in pred_ids if i not in by_id]
    missing_pred = sorted(set(by_id) - set(pred_ids))
    if missing_ref or missing_pred:
        raise AlignmentError(
            f"unaligned image ids: no reference for {missing_ref}, no prediction for {missing_pred}"
        )
    scores = tuple(
        ImageScore(p.image_id, pixel_iou(p, by_id[p.image_id]),
                   mean_average_precision(p, by_id[p.image_id], cfg))
        for p in preds
    )
    if not scores:
        return DatasetScores((), float("nan"), float("nan"))
    return DatasetScores(
        scores,
        float(np.mean([s.pixel_iou for s in scores])),
        float(np.mean([s.map for s in scores])),
    )
