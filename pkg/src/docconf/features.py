"""Object descriptive statistics and their concatenated histogram vector.

Per object: bbox height and width relative to the image, bbox aspect
ratio (height / width), polygon area relative to image and to bbox, and
bbox area relative to the image. Per unordered pair of objects: vertical and
horizontal distance between bbox centroids, relative to image height and
width. Polygon areas are shoelace areas of the traced contour; bbox areas use
integer-pixel width and height.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .geometry import polygon_area, rect_centroid
from .postprocess import Prediction

N_FEATURES = 8
FEATURE_NAMES = (
    "bbox_height_ratio",
    "bbox_width_ratio",
    "bbox_aspect",
    "polygon_image_area_ratio",
    "polygon_bbox_area_ratio",
    "bbox_image_area_ratio",
    "centroid_dy",
    "centroid_dx",
)
DEFAULT_RANGES = ((0.0, 1.0), (0.0, 1.0), (0.0, 5.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0))


@dataclass(frozen=True)
class FeatureConfig:
    bins: int = 10
    ranges: tuple[tuple[float, float], ...] = DEFAULT_RANGES
    normalize: bool = True

    def __post_init__(self):
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        object.__setattr__(self, "ranges", ranges)
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if len(ranges) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} feature ranges, got {len(ranges)}")
        for name, (lo, hi) in zip(FEATURE_NAMES, ranges):
            if not lo < hi:
                raise ValueError(f"range for {name} must satisfy lo < hi, got [{lo}, {hi}]")

    @property
    def length(self) -> int:
        return N_FEATURES * self.bins

    def to_dict(self) -> dict:
        return {"bins": self.bins, "ranges": [list(r) for r in self.ranges], "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(int(d["bins"]), tuple(tuple(r) for r in d["ranges"]), bool(d["normalize"]))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    image_id: str
    values: np.ndarray
    config_fingerprint: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("feature vector must be one-dimensional")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def object_feature_values(p: Prediction) -> list[list[float]]:
    H, W = p.height, p.width
    image_area = float(H * W)
    lists: list[list[float]] = [[] for _ in range(N_FEATURES)]
    for o in p.objects:
        b = o.bbox
        poly_area = polygon_area(o.polygon)
        lists[0].append(b.height / H)
        lists[1].append(b.width / W)
        lists[2].append(b.height / b.width)
        lists[3].append(poly_area / image_area)
        lists[4].append(poly_area / b.area)
        lists[5].append(b.area / image_area)
    centroids = [rect_centroid(o.bbox) for o in p.objects]
    for a, b in combinations(centroids, 2):
        lists[6].append(abs(a.y - b.y) / H)
        lists[7].append(abs(a.x - b.x) / W)
    return lists


def histogram(values: Sequence[float], lo: float, hi: float, bins: int) -> np.ndarray:
    """Equal-width counts over ``[lo, hi]``; out-of-range values clip to the end bins.

    Bins are half-open, so a value on an inner edge lands in the higher bin;
    the last bin is closed.
    """
    counts = np.zeros(bins)
    if len(values) == 0:
        return counts
    edges = lo + np.arange(bins + 1) * (hi - lo) / bins
    idx = np.searchsorted(edges, np.asarray(values, dtype=np.float64), side="right") - 1
    np.add.at(counts, np.clip(idx, 0, bins - 1), 1.0)
    return counts


def feature_histogram_vector(
    lists: Sequence[Sequence[float]],
    cfg: FeatureConfig = FeatureConfig(),
    image_id: str = "",
) -> FeatureVector:
    if len(lists) != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} feature lists, got {len(lists)}")
    parts = []
    for values, (lo, hi) in zip(lists, cfg.ranges):
        h = histogram(values, lo, hi, cfg.bins)
        if cfg.normalize and len(values):
            h /= len(values)
        parts.append(h)
    return FeatureVector(image_id, np.concatenate(parts), cfg.fingerprint())


def feature_vector(p: Prediction, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    return feature_histogram_vector(object_feature_values(p), cfg, p.image_id)
