"""Confidence-driven annotation selection and a synthetic active-learning loop.

The loop replaces detector fine-tuning with an analytic quality curve of
the synthetic detector. Each labelled image adds ``d / mean(d)`` effective
labels, where ``d`` is its difficulty, so annotating images the detector
already handles well teaches it little.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import estimators as est
from .estimators import ConfidenceScore, Estimator
from .features import FeatureConfig, feature_vector
from .forest import ForestModel, ForestParams, RegressionDataset, fit
from .metrics import MapConfig, dataset_scores, mean_average_precision
from .synthetic import (
    CorpusConfig,
    SyntheticCorpus,
    SyntheticDetectorConfig,
    make_ground_truth,
    make_rng,
    perturb_ensemble,
    perturb_prediction,
    severities,
)

log = logging.getLogger(__name__)

# Selection strategies accepted by ``simulate`` besides the four estimators.
ORACLE = "oracle"
RANDOM = "random"


@dataclass(frozen=True)
class Policy:
    kind: str  # "threshold" or "budget"
    value: float

    def __post_init__(self):
        if self.kind not in ("threshold", "budget"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "budget" and (self.value < 0 or int(self.value) != self.value):
            raise ValueError("budget must be a non-negative integer")

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """``threshold:0.2`` or ``budget:10``."""
        kind, sep, value = text.partition(":")
        if not sep:
            raise ValueError(f"policy must look like 'threshold:T' or 'budget:K', got {text!r}")
        kind = kind.strip()
        return cls(kind, int(value) if kind == "budget" else float(value))

    def __str__(self) -> str:
        v = int(self.value) if self.kind == "budget" else self.value
        return f"{self.kind}:{v}"


@dataclass(frozen=True)
class Selection:
    ids: tuple[str, ...]
    status: str = "ok"  # "budget-exceeds-pool" when k > pool size


def _least_confident_first(scores: Sequence[ConfidenceScore]) -> list[ConfidenceScore]:
    if scores[0].higher_is_confident:
        return sorted(scores, key=lambda s: (s.value, s.image_id))
    return sorted(scores, key=lambda s: (-s.value, s.image_id))


def select(scores: Sequence[ConfidenceScore], policy: Policy) -> Selection:
    if not scores:
        raise ValueError("cannot select from an empty pool")
    if len({s.higher_is_confident for s in scores}) > 1:
        raise ValueError("scores mix confidence directions")
    ranked = _least_confident_first(scores)
    if policy.kind == "budget":
        k = int(policy.value)
        status = "ok"
        if k > len(ranked):
            log.warning("budget %d exceeds pool of %d; selecting the whole pool", k, len(ranked))
            status = "budget-exceeds-pool"
        return Selection(tuple(s.image_id for s in ranked[:k]), status)
    tau = policy.value
    if ranked[0].higher_is_confident:
        chosen = [s for s in ranked if s.value < tau]
    else:
        chosen = [s for s in ranked if s.value > tau]
    return Selection(tuple(s.image_id for s in chosen))


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    estimator: str
    policy: str
    n_selected: int
    cumulative_images: int
    test_iou: float
    test_map: float
    quality: float
    selected: tuple[str, ...] = ()


@dataclass
class PoolState:
    labeled: list[str]
    unlabeled: list[str]
    iteration: int = 0
    effective_labels: float = 0.0
    log: list[IterationLog] = field(default_factory=list)

    def labels_to_reach(self, target_map: float) -> Optional[int]:
        """Cumulative images at the first logged iteration with test mAP >= target."""
        for row in self.log:
            if row.test_map >= target_map - 1e-12:
                return row.cumulative_images
        return None


def train_rfr_on_synthetic(
    det: SyntheticDetectorConfig,
    corpus_cfg: CorpusConfig = CorpusConfig(),
    n_images: int = 200,
    seed: int = 0,
    map_cfg: MapConfig = MapConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    params: Optional[ForestParams] = None,
) -> ForestModel:
    """Fit mAP-RFR on an annotated synthetic source set with uniform severities."""
    gts = [make_ground_truth(f"source-{i:05d}", corpus_cfg, seed) for i in range(n_images)]
    sev = severities(gts, seed)
    vectors, targets = [], []
    for g in gts:
        p = perturb_prediction(g, sev[g.image_id], det.mixture, (seed, "source"))
        vectors.append(feature_vector(p, feature_cfg))
        targets.append(mean_average_precision(p, g, map_cfg))
    data = RegressionDataset.from_vectors(vectors, targets)
    return fit(data, params or ForestParams(seed=seed), feature_cfg)


def _score_pool(
    images, severity, estimator, det, map_cfg, seed, iteration, model,
) -> list[ConfidenceScore]:
    if estimator == RANDOM:
        draws = make_rng(seed, "random-policy", iteration).random(len(images))
        return [ConfidenceScore(g.image_id, RANDOM, float(v), True) for g, v in zip(images, draws)]
    key = (seed, "pool", iteration)
    out = []
    for g in images:
        s = severity[g.image_id]
        if estimator in (Estimator.DAP, Estimator.DOV):
            e = perturb_ensemble(g, s, det.ensemble_size, det.mixture, key, det.dropout_scale)
            out.append(est.dap(e, map_cfg) if estimator is Estimator.DAP else est.dov(e))
            continue
        p = perturb_prediction(g, s, det.mixture, key)
        if estimator is Estimator.PCE:
            out.append(est.pce(p))
        elif estimator is Estimator.MAP_RFR:
            out.append(est.map_rfr(model, p))
        else:
            out.append(ConfidenceScore(g.image_id, ORACLE, mean_average_precision(p, g, map_cfg), True))
    return out


def _evaluate_test(corpus, det, quality, map_cfg, seed):
    # Common random numbers: test draws do not depend on the iteration, so the
    # test score moves only through the detector quality.
    preds = [
        perturb_prediction(g, corpus.difficulty[g.image_id] * (1.0 - quality), det.mixture, (seed, "test"))
        for g in corpus.test
    ]
    scores = dataset_scores(preds, corpus.test, map_cfg)
    return scores.mean_iou, scores.mean_map


def simulate(
    corpus: SyntheticCorpus,
    det: SyntheticDetectorConfig,
    estimator,
    policy: Policy,
    n_iterations: int,
    map_cfg: MapConfig = MapConfig(),
    seed: int = 0,
    model: Optional[ForestModel] = None,
) -> PoolState:
    """Run the annotate-retrain loop; ``estimator`` is an Estimator, "oracle" or "random".

    Iteration 0 logs the untouched baseline.
    """
    if not corpus.pool:
        raise ValueError("empty corpus")
    if not corpus.test:
        raise ValueError("corpus has no test images")
    if estimator not in (ORACLE, RANDOM):
        estimator = Estimator(estimator)
    if estimator == RANDOM and policy.kind != "budget":
        raise ValueError("random selection needs a budget policy")
    if estimator is Estimator.MAP_RFR and model is None:
        model = train_rfr_on_synthetic(det, CorpusConfig(corpus.pool[0].height, corpus.pool[0].width), seed=seed, map_cfg=map_cfg)
    name = getattr(estimator, "value", estimator)
    by_id = {g.image_id: g for g in corpus.pool}
    mean_difficulty = float(np.mean([corpus.difficulty[g.image_id] for g in corpus.pool])) or 1.0

    state = PoolState([], [g.image_id for g in corpus.pool])
    quality = det.quality(0.0)
    iou, mAP = _evaluate_test(corpus, det, quality, map_cfg, seed)
    state.log.append(IterationLog(0, name, str(policy), 0, 0, iou, mAP, quality))
    for it in range(1, n_iterations + 1):
        if not state.unlabeled:
            break
        quality = det.quality(state.effective_labels)
        images = [by_id[i] for i in state.unlabeled]
        severity = {g.image_id: corpus.difficulty[g.image_id] * (1.0 - quality) for g in images}
        scores = _score_pool(images, severity, estimator, det, map_cfg, seed, it, model)
        chosen = select(scores, policy).ids
        chosen_set = set(chosen)
        state.labeled.extend(chosen)
        state.unlabeled = [i for i in state.unlabeled if i not in chosen_set]
        state.effective_labels += sum(corpus.difficulty[i] for i in chosen) / mean_difficulty
        state.iteration = it
        quality = det.quality(state.effective_labels)
        iou, mAP = _evaluate_test(corpus, det, quality, map_cfg, seed)
        state.log.append(IterationLog(it, name, str(policy), len(chosen), len(state.labeled), iou, mAP, quality, chosen))
        log.info("iteration %d: %d selected, %d labelled, test mAP %.4f", it, len(chosen), len(state.labeled), mAP)
    return state
