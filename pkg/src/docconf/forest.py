"""Random forest of CART regression trees.

Trees are grown on bootstrap resamples with the variance-reduction
criterion and an exhaustive search over midpoints between consecutive
distinct feature values. Gain ties go to the lowest feature index, then the
lowest threshold. Each tree draws from its own RNG stream seeded by
``(seed, tree_index)``, so a fitted forest does not depend on build order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .features import FeatureConfig, FeatureVector

MAGIC = b"DCRF"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class FeatureMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    features_per_split: Optional[int] = None  # None = all features
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flattened binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True, eq=False)
class ForestModel:
    params: ForestParams
    n_features: int
    trees: tuple[Tree, ...]
    y_min: float
    y_max: float
    feature_config: Optional[FeatureConfig] = None
    oob_mse: float = float("nan")
    # Bootstrap membership per tree; kept in memory only.
    in_bag: Optional[tuple[np.ndarray, ...]] = field(default=None, repr=False)

    @property
    def fingerprint(self) -> str:
        return self.feature_config.fingerprint() if self.feature_config else ""


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    image_ids: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64).ravel()
        ids = tuple(self.image_ids)
        if len(ids) != len(X) or len(y) != len(X):
            raise ValueError(f"dataset rows disagree: {len(ids)} ids, {len(X)} vectors, {len(y)} targets")
        if len(y) and not np.all((y >= 0.0) & (y <= 1.0)):
            raise ValueError("targets must lie in [0, 1]")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "image_ids", ids)

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], targets: Sequence[float]) -> "RegressionDataset":
        lengths = {len(v) for v in vectors}
        if len(lengths) > 1:
            raise ValueError(f"feature vectors have inconsistent lengths {sorted(lengths)}")
        X = np.array([v.values for v in vectors]) if vectors else np.zeros((0, 0))
        return cls(tuple(v.image_id for v in vectors), X, np.asarray(targets, dtype=np.float64))


def _best_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Return ``(feature, threshold)`` maximising variance reduction, or None."""
    n = len(y)
    Xf = X[:, feats]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    ys = y[order]
    left_sum = np.cumsum(ys, axis=0)[:-1]
    total = ys.sum(axis=0)
    k = np.arange(1, n, dtype=np.float64)[:, None]
    valid = xs[:-1] < xs[1:]
    valid &= (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None
    # Minimising the children's SSE == maximising this proxy.
    proxy = left_sum**2 / k + (total - left_sum) ** 2 / (n - k)
    proxy = np.where(valid, proxy, -np.inf)
    best = proxy.max()
    near = proxy >= best - 1e-12 * max(1.0, abs(best))
    # Column-major scan: lowest feature first, then lowest threshold.
    cols, positions = np.nonzero(near.T)
    col, pos = cols[0], positions[0]
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = (lo + hi) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(feats[col]), float(thr)


def _grow_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator) -> Tree:
    n_features = X.shape[1]
    k_feats = params.features_per_split
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        yy = y[idx]
        value.append(float(min(yy.max(), max(yy.min(), yy.mean()))))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yy = y[idx]
        if (
            len(idx) < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
            or yy.max() == yy.min()
        ):
            continue
        if k_feats is None or k_feats >= n_features:
            feats = np.arange(n_features)
        else:
            feats = np.sort(rng.choice(n_features, size=k_feats, replace=False))
        split = _best_split(X[idx], yy, feats, params.min_samples_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=np.float64),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, tree_index])


def fit(
    d: RegressionDataset,
    params: ForestParams = ForestParams(),
    feature_config: Optional[FeatureConfig] = None,
) -> ForestModel:
    n = len(d)
    if n == 0 or d.X.shape[1] == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    if feature_config is not None and feature_config.length != d.X.shape[1]:
        raise FeatureMismatchError(
            f"feature config describes {feature_config.length} values, dataset has {d.X.shape[1]}"
        )
    trees, in_bag = [], []
    oob_sum = np.zeros(n)
    oob_count = np.zeros(n)
    for t in range(params.n_trees):
        rng = tree_rng(params.seed, t)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        tree = _grow_tree(d.X[idx], d.y[idx], params, rng)
        bag = np.zeros(n, dtype=bool)
        bag[idx] = True
        if (~bag).any():
            oob_sum[~bag] += tree.predict(d.X[~bag])
            oob_count[~bag] += 1
        trees.append(tree)
        in_bag.append(bag)
    seen = oob_count > 0
    oob = float(np.mean((oob_sum[seen] / oob_count[seen] - d.y[seen]) ** 2)) if seen.any() else float("nan")
    return ForestModel(
        params, d.X.shape[1], tuple(trees), float(d.y.min()), float(d.y.max()),
        feature_config, oob, tuple(in_bag),
    )


def _as_matrix(m: ForestModel, x) -> np.ndarray:
    if isinstance(x, FeatureVector):
        if x.config_fingerprint and m.fingerprint and x.config_fingerprint != m.fingerprint:
            raise FeatureMismatchError(
                f"feature config {x.config_fingerprint} differs from the model's {m.fingerprint}"
            )
        x = x.values
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != m.n_features:
        raise FeatureMismatchError(f"model expects {m.n_features} features, got {X.shape[1]}")
    return X


def predict_many(m: ForestModel, X) -> np.ndarray:
    X = _as_matrix(m, X)
    per_tree = np.stack([t.predict(X) for t in m.trees])
    # Clip the float mean into the traced leaves' range (exact for equal leaves).
    return np.clip(per_tree.mean(axis=0), per_tree.min(axis=0), per_tree.max(axis=0))


def predict(m: ForestModel, x) -> float:
    return float(predict_many(m, x)[0])


def oob_mse(m: ForestModel, d: RegressionDataset, n_trees: Optional[int] = None) -> float:
    """Out-of-bag MSE of the first ``n_trees`` trees on their training data."""
    if m.in_bag is None:
        raise ValueError("model carries no bootstrap membership (loaded from disk?)")
    k = len(m.trees) if n_trees is None else n_trees
    total = np.zeros(len(d))
    count = np.zeros(len(d))
    for tree, bag in zip(m.trees[:k], m.in_bag[:k]):
        out = ~bag
        if out.any():
            total[out] += tree.predict(d.X[out])
            count[out] += 1
    seen = count > 0
    return float(np.mean((total[seen] / count[seen] - d.y[seen]) ** 2)) if seen.any() else float("nan")


def mse(m: ForestModel, d: RegressionDataset) -> float:
    if len(d) == 0:
        raise ValueError("cannot compute MSE on an empty dataset")
    return float(np.mean((predict_many(m, d.X) - d.y) ** 2))


def _encode_tree(t: Tree) -> bytes:
    return b"".join((
        struct.pack("<I", t.n_nodes),
        t.feature.astype("<i4").tobytes(),
        t.threshold.astype("<f8").tobytes(),
        t.left.astype("<i4").tobytes(),
        t.right.astype("<i4").tobytes(),
        t.value.astype("<f8").tobytes(),
    ))


def to_bytes(m: ForestModel) -> bytes:
    header = {
        "params": asdict(m.params),
        "n_features": m.n_features,
        "n_trees": len(m.trees),
        "y_min": m.y_min,
        "y_max": m.y_max,
        "oob_mse": None if np.isnan(m.oob_mse) else m.oob_mse,
        "feature_config": m.feature_config.to_dict() if m.feature_config else None,
        "feature_fingerprint": m.fingerprint,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + struct.pack("<HI", FORMAT_VERSION, len(hb)) + hb
    body += b"".join(_encode_tree(t) for t in m.trees)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(buf: bytes, source: str = "<bytes>") -> ForestModel:
    def fail(msg):
        raise ModelFormatError(f"{source}: {msg}")

    if len(buf) < 14:
        fail(f"file too short ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        fail(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != FORMAT_VERSION:
        fail(f"unsupported format version {version} (this build reads {FORMAT_VERSION})")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        fail("checksum mismatch (truncated or corrupt file)")
    (hlen,) = struct.unpack_from("<I", buf, 6)
    off = 10 + hlen
    try:
        header = json.loads(body[10:off].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        fail(f"unreadable header: {exc}")
    trees = []
    for i in range(header["n_trees"]):
        if off + 4 > len(body):
            fail(f"tree {i} missing at byte {off}")
        (nn,) = struct.unpack_from("<I", body, off)
        off += 4
        need = nn * (4 + 8 + 4 + 4 + 8)
        if off + need > len(body):
            fail(f"tree {i} truncated at byte {off}")
        arrays = []
        for dtype, size in (("<i4", 4), ("<f8", 8), ("<i4", 4), ("<i4", 4), ("<f8", 8)):
            arrays.append(np.frombuffer(body, dtype=dtype, count=nn, offset=off).astype(dtype[1:]))
            off += nn * size
        trees.append(Tree(*arrays))
    if off != len(body):
        fail(f"{len(body) - off} trailing bytes after the last tree")
    fc = header["feature_config"]
    return ForestModel(
        ForestParams(**header["params"]),
        header["n_features"],
        tuple(trees),
        header["y_min"],
        header["y_max"],
        FeatureConfig.from_dict(fc) if fc else None,
        float("nan") if header["oob_mse"] is None else header["oob_mse"],
    )


def save(m: ForestModel, path) -> None:
    Path(path).write_bytes(to_bytes(m))


def load(path) -> ForestModel:
    p = Path(path)
    if not p.is_file():
        raise ModelFormatError(f"{p}: no such model file")
    return from_bytes(p.read_bytes(), str(p))
