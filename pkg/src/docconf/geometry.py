"""Geometric primitives: points, integer-pixel rectangles, polygons and masks.

Coordinates follow raster indexing: origin at the top-left corner, ``x`` is
the pixel column and ``y`` the pixel row. A pixel ``(row, col)`` has its
center at ``(x=col, y=row)``, so polygons traced through boundary pixel
centers rasterize back onto the pixels they were traced from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

_EPS = 1e-9


class InvalidGeometryError(ValueError):
    """Raised when a polygon, rectangle or mask violates its invariants."""


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with inclusive integer-pixel bounds."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InvalidGeometryError(f"empty rectangle {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max


@dataclass(frozen=True)
class Polygon:
    """Closed ring of vertices; the closing edge is implicit."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple(Point(float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise InvalidGeometryError(
                f"polygon needs at least 3 vertices, got {len(verts)}"
            )
        for i, v in enumerate(verts):
            if not (math.isfinite(v.x) and math.isfinite(v.y)):
                raise InvalidGeometryError(f"vertex {i} is not finite: {v}")
            if v == verts[i - 1]:
                raise InvalidGeometryError(f"consecutive duplicate vertex at index {i}")

    @classmethod
    def from_coords(cls, coords: Iterable[Sequence[float]]) -> "Polygon":
        return cls(tuple(Point(float(c[0]), float(c[1])) for c in coords))

    def to_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean raster of shape ``(height, width)``."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise InvalidGeometryError(f"mask must be a non-empty 2-D grid, got {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))


def polygon_area(p: Polygon) -> float:
    """Absolute shoelace area, independent of vertex orientation."""
    if len(p.vertices) < 3:
        raise InvalidGeometryError("degenerate polygon")
    v = p.to_array()
    x, y = v[:, 0], v[:, 1]
    # Shift to the first vertex to limit cancellation on large coordinates.
    x = x - x[0]
    y = y - y[0]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def polygon_perimeter(p: Polygon) -> float:
    v = p.to_array()
    return float(np.hypot(*(np.roll(v, -1, axis=0) - v).T).sum())


def bounding_rect(p: Polygon) -> Rect:
    v = p.to_array()
    lo = np.floor(v.min(axis=0)).astype(int)
    hi = np.ceil(v.max(axis=0)).astype(int)
    return Rect(int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1]))


def rect_centroid(r: Rect) -> Point:
    return Point((r.x_min + r.x_max) / 2.0, (r.y_min + r.y_max) / 2.0)


def rect_polygon(r: Rect) -> Polygon:
    """Polygon through the centers of the rectangle's corner pixels."""
    if r.width == 1 or r.height == 1:
        raise InvalidGeometryError("rectangle one pixel thick has no polygon outline")
    return Polygon((
        Point(r.x_min, r.y_min),
        Point(r.x_max, r.y_min),
        Point(r.x_max, r.y_max),
        Point(r.x_min, r.y_max),
    ))


def rasterize_crop(p: Polygon, height: int, width: int) -> tuple[int, int, np.ndarray]:
    """Rasterize ``p`` inside its clipped bounding window.

    Returns ``(row0, col0, crop)`` where ``crop`` covers rows
    ``row0 .. row0 + crop.shape[0] - 1`` of the image. A pixel is set iff its
    center is inside the polygon (even-odd rule) or on its boundary. The crop
    is empty (zero-sized) when the polygon misses the image entirely.
    """
    if height < 1 or width < 1:
        raise InvalidGeometryError(f"image size must be positive, got {height}x{width}")
    v = p.to_array()
    r0 = max(0, math.ceil(v[:, 1].min() - _EPS))
    r1 = min(height - 1, math.floor(v[:, 1].max() + _EPS))
    c0 = max(0, math.ceil(v[:, 0].min() - _EPS))
    c1 = min(width - 1, math.floor(v[:, 0].max() + _EPS))
    if r1 < r0 or c1 < c0:
        return 0, 0, np.zeros((0, 0), dtype=bool)
    n_rows, n_cols = r1 - r0 + 1, c1 - c0 + 1

    xa, ya = v[:, 0], v[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    rows = np.arange(r0, r1 + 1, dtype=np.float64)

    sloped = ya != yb
    sxa, sya, sxb, syb = xa[sloped], ya[sloped], xb[sloped], yb[sloped]
    lo = np.minimum(sya, syb)[:, None]
    hi = np.maximum(sya, syb)[:, None]
    y = rows[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        xs = sxa[:, None] + (y - sya[:, None]) * ((sxb - sxa) / (syb - sya))[:, None]

    # Even-odd parity: toggle every pixel center strictly right of a crossing.
    crossing = (lo <= y) & (y < hi)
    e_idx, r_idx = np.nonzero(crossing)
    toggle_col = np.clip(np.floor(xs[e_idx, r_idx]).astype(np.int64) + 1 - c0, 0, n_cols)
    toggles = np.zeros((n_rows, n_cols + 1), dtype=np.int32)
    np.add.at(toggles, (r_idx, toggle_col), 1)
    inside = (np.cumsum(toggles[:, :n_cols], axis=1) & 1).astype(bool)

    # Boundary pixels: centers lying exactly on a sloped edge ...
    on_edge = (lo - _EPS <= y) & (y <= hi + _EPS)
    e_idx, r_idx = np.nonzero(on_edge)
    bx = xs[e_idx, r_idx]
    rx = np.round(bx)
    hit = (np.abs(bx - rx) <= _EPS) & (rx >= c0) & (rx <= c1)
    inside[r_idx[hit], rx[hit].astype(np.int64) - c0] = True

    # ... or on a horizontal one.
    for x0, x1, yy in zip(xa[~sloped], xb[~sloped], ya[~sloped]):
        ry = round(yy)
        if abs(yy - ry) > _EPS or not r0 <= ry <= r1:
            continue
        lo_c = max(c0, math.ceil(min(x0, x1) - _EPS))
        hi_c = min(c1, math.floor(max(x0, x1) + _EPS))
        if lo_c <= hi_c:
            inside[ry - r0, lo_c - c0 : hi_c - c0 + 1] = True
    return r0, c0, inside


def rasterize(p: Polygon, height: int, width: int) -> BinaryMask:
    """Full-image mask of the pixels whose centers lie inside or on ``p``."""
    r0, c0, crop = rasterize_crop(p, height, width)
    bits = np.zeros((height, width), dtype=bool)
    if crop.size:
        bits[r0 : r0 + crop.shape[0], c0 : c0 + crop.shape[1]] = crop
    return BinaryMask(bits)
