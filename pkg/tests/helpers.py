"""Scene builders shared by the tests."""

from __future__ import annotations

import numpy as np

from docconf.forest import RegressionDataset
from docconf.geometry import Polygon, Rect, bounding_rect, rasterize, rect_polygon
from docconf.metrics import GroundTruth
from docconf.postprocess import DetectedObject, Prediction


def rect_poly(x0, y0, x1, y1) -> Polygon:
    return rect_polygon(Rect(x0, y0, x1, y1))


def detected(poly: Polygon, prob: float, height: int, width: int) -> DetectedObject:
    return DetectedObject(poly, bounding_rect(poly), rasterize(poly, height, width).count, prob)


def prediction(polys, probs=None, height=40, width=40, image_id="img") -> Prediction:
    probs = probs if probs is not None else [0.9] * len(polys)
    return Prediction(image_id, height, width, tuple(detected(p, q, height, width) for p, q in zip(polys, probs)))


def ground_truth(polys, height=40, width=40, image_id="img") -> GroundTruth:
    return GroundTruth(image_id, height, width, tuple(polys))


def step_data(n, seed, n_features=5) -> RegressionDataset:
    """Targets are a unit step in the first feature."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, n_features))
    y = (X[:, 0] > 0.5).astype(float)
    return RegressionDataset(tuple(f"r{i}" for i in range(n)), X, y)
