"""Training-free confidence estimators and the regression-based wrapper.

``pce`` averages the per-object mean probabilities of a single prediction.
``dap`` and ``dov`` summarise a dropout ensemble: the mean pairwise mAP over
all ordered member pairs, and the population variance of member object
counts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FeatureConfig, feature_vector
from .forest import ForestModel, predict
from .metrics import MapConfig, confidence_order, map_from_iou, object_iou_matrix
from .postprocess import Prediction

DEFAULT_ENSEMBLE_SIZE = 10
TESTED_ENSEMBLE_SIZES = (2, 5, 10, 25, 50)


class Estimator(str, enum.Enum):
    PCE = "pce"
    DAP = "dap"
    DOV = "dov"
    MAP_RFR = "map-rfr"

    @property
    def higher_is_confident(self) -> bool:
        return self is not Estimator.DOV


class InsufficientEnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class DropoutEnsemble:
    image_id: str
    predictions: tuple[Prediction, ...]

    def __post_init__(self):
        preds = tuple(self.predictions)
        object.__setattr__(self, "predictions", preds)
        if len({(p.height, p.width) for p in preds}) > 1:
            raise ValueError(f"ensemble {self.image_id!r} mixes image sizes")

    @property
    def n(self) -> int:
        return len(self.predictions)


@dataclass(frozen=True)
class ConfidenceScore:
    image_id: str
    estimator: Estimator | str
    value: float
    higher_is_confident: bool
    # Non-empty when a convention rather than a measurement produced the value.
    note: str = ""


def pce(p: Prediction) -> ConfidenceScore:
    if not p.objects:
        return ConfidenceScore(p.image_id, Estimator.PCE, 0.0, True, "empty-prediction")
    value = float(np.mean([o.mean_prob for o in p.objects]))
    return ConfidenceScore(p.image_id, Estimator.PCE, value, True)


def _require_pairs(e: DropoutEnsemble) -> None:
    if e.n < 2:
        raise InsufficientEnsembleError(
            f"ensemble {e.image_id!r} has {e.n} member(s); at least 2 are required"
        )


def pairwise_map_matrix(e: DropoutEnsemble, cfg: MapConfig = MapConfig()) -> np.ndarray:
    """``M[i, j] = mAP(prediction=p_j, reference=p_i)``; the diagonal is NaN."""
    preds = e.predictions
    orders = [confidence_order(p) for p in preds]
    out = np.full((e.n, e.n), np.nan)
    for i in range(e.n):
        for j in range(i + 1, e.n):
            # One IoU matrix serves both orientations of the pair.
            iou = object_iou_matrix(preds[j], preds[i])
            out[i, j] = map_from_iou(iou, orders[j], cfg)
            out[j, i] = map_from_iou(iou.T, orders[i], cfg)
    return out


def dap(e: DropoutEnsemble, cfg: MapConfig = MapConfig()) -> ConfidenceScore:
    _require_pairs(e)
    m = pairwise_map_matrix(e, cfg)
    total = 0.0
    # Fixed row-major accumulation keeps the sum bitwise reproducible.
    for i in range(e.n):
        for j in range(e.n):
            if i != j:
                total += m[i, j]
    value = total / (e.n * e.n - e.n)
    note = "all-empty-ensemble" if all(len(p) == 0 for p in e.predictions) else ""
    return ConfidenceScore(e.image_id, Estimator.DAP, value, True, note)


def object_count_variance(counts: Sequence[int]) -> float:
    """Population variance, computed exactly in integers with one final division."""
    c = [int(x) for x in counts]
    n, total = len(c), sum(c)
    return (n * sum(x * x for x in c) - total * total) / (n * n)


def dov(e: DropoutEnsemble) -> ConfidenceScore:
    _require_pairs(e)
    value = object_count_variance([len(p) for p in e.predictions])
    return ConfidenceScore(e.image_id, Estimator.DOV, value, False)


def map_rfr(model: ForestModel, p: Prediction) -> ConfidenceScore:
    """Regressed mAP of ``p`` from its object statistics histogram.

    The histogram uses the feature configuration stored with the model.
    """
    fv = feature_vector(p, model.feature_config or FeatureConfig())
    value = min(1.0, max(0.0, predict(model, fv)))
    return ConfidenceScore(p.image_id, Estimator.MAP_RFR, value, True)
