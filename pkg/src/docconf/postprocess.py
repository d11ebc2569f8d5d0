"""Turn a per-pixel probability map into a set of detected objects.

Pipeline: threshold -> connected components -> drop small components ->
outer contour, bounding box, pixel area and mean probability per survivor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from .geometry import BinaryMask, Point, Polygon, Rect, bounding_rect

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Object-class probability for every pixel of one image, shape ``(H, W)``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"probability map must be a non-empty 2-D grid, got {values.shape}")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("probability values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DetectedObject:
    polygon: Polygon
    bbox: Rect
    pixel_area: int
    mean_prob: float
    # Rasterization cache keyed by image size; not part of the value.
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.mean_prob <= 1.0:
            raise ValueError(f"mean_prob must lie in [0, 1], got {self.mean_prob}")


@dataclass(frozen=True)
class Prediction:
    image_id: str
    height: int
    width: int
    objects: tuple[DetectedObject, ...] = ()
    # Foreground pixels dropped by the area filter (or untraceable).
    filtered_pixels: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def __len__(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class PostprocessConfig:
    binarize_threshold: float = 0.5
    connectivity: int = 8
    min_area_px: int = 50

    def __post_init__(self):
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.connectivity not in _STRUCTURES:
            raise ValueError("connectivity must be 4 or 8")
        if self.min_area_px < 0:
            raise ValueError("min_area_px must be >= 0")


def binarize(m: ProbabilityMap, cfg: PostprocessConfig = PostprocessConfig()) -> BinaryMask:
    # Two-class argmax with ties going to the object class.
    return BinaryMask(m.values >= cfg.binarize_threshold)


def _label(bits: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    # scipy numbers components in raster order of their first pixel.
    return ndimage.label(bits, structure=_STRUCTURES[connectivity])


def connected_components(m: BinaryMask, connectivity: int = 8) -> list[np.ndarray]:
    """Maximal connected pixel sets as ``(k, 2)`` arrays of ``(row, col)``.

    Components are ordered by their first pixel in row-major order; pixels
    within a component are row-major too.
    """
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 4 or 8")
    labels, n = _label(m.bits, connectivity)
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    bounds = np.cumsum(counts)
    coords = np.column_stack(np.unravel_index(order, labels.shape))
    return [coords[bounds[i - 1] : bounds[i]] for i in range(1, n + 1)]


_FOUR = ndimage.generate_binary_structure(2, 1)


def _fill_holes(crop: np.ndarray) -> np.ndarray:
    """Component plus every background region not 4-connected to the border."""
    padded = np.pad(~crop, 1, constant_values=True)
    labels, _ = ndimage.label(padded, structure=_FOUR)
    return (labels != labels[0, 0])[1:-1, 1:-1]


def _trace_outer(crop: np.ndarray) -> list[tuple[int, int]] | None:
    """Outer border of a single component by border following.

    Vertices are pixel centers in crop coordinates. Straight runs are
    compressed; thin components fall back to the uncompressed chain so the
    ring keeps at least three vertices. Returns None for components too
    small to form a ring (one or two pixels).
    """
    padded = np.pad(crop.astype(np.uint8), 1)
    for mode in (cv2.CHAIN_APPROX_SIMPLE, cv2.CHAIN_APPROX_NONE):
        contours, _ = cv2.findContours(padded, cv2.RETR_EXTERNAL, mode)
        ring = max(contours, key=len).reshape(-1, 2) - 1
        pts = [(int(x), int(y)) for x, y in ring]
        pts = [p for i, p in enumerate(pts) if p != pts[i - 1]] if len(pts) > 1 else pts
        if len(pts) >= 3:
            return pts
    return None


def extract_objects(
    m: ProbabilityMap,
    cfg: PostprocessConfig = PostprocessConfig(),
    image_id: str = "",
) -> Prediction:
    labels, _ = _label(m.values >= cfg.binarize_threshold, cfg.connectivity)
    objects = []
    rasters = []
    filtered = 0
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        crop = labels[sl] == idx
        area = int(crop.sum())
        if area < cfg.min_area_px:
            filtered += area
            continue
        ring = _trace_outer(crop)
        if ring is None:
            filtered += area
            continue
        y0, x0 = sl[0].start, sl[1].start
        polygon = Polygon(tuple(Point(x + x0, y + y0) for x, y in ring))
        mean_prob = float(np.mean(m.values[sl][crop]))
        objects.append(
            DetectedObject(polygon, bounding_rect(polygon), area, min(1.0, max(0.0, mean_prob)))
        )
        # The contour rasterizes to exactly the hole-filled component.
        filled = _fill_holes(crop)
        rasters.append((y0, x0, filled, int(filled.sum())))
    pred = Prediction(image_id, m.height, m.width, tuple(objects), filtered)
    pred._cache[("rasters", m.height, m.width)] = rasters
    return pred
