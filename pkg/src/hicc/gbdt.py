"""
Histogram-based, leaf-wise gradient boosted trees for binary log-loss.

Features are binned once into at most ``n_bins`` quantile bins; each tree grows
by repeatedly splitting the leaf with the largest gain, building one child's
histogram directly and the sibling's by subtraction from the parent.
"""
from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import SchemaMismatchError, TrainingError, ValidationError
from .features import FeatureMatrix, FeatureVector

logger = logging.getLogger(__name__)

MODEL_MAGIC = "HICC-GBDT"
MODEL_FORMAT_VERSION = 1
RAW_CLIP = 35.0


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 410
    max_leaves: int = 16
    learning_rate: float = 0.05
    l2_reg: float = 0.0
    min_samples_leaf: int = 20
    n_bins: int = 255
    min_hessian: float = 1e-3

    def __post_init__(self) -> None:
        if self.n_trees < 0:
            raise ValidationError("n_trees must be >= 0")
        if self.max_leaves < 2:
            raise ValidationError("max_leaves must be >= 2")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.l2_reg < 0:
            raise ValidationError("l2_reg must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if not (2 <= self.n_bins <= 255):
            raise ValidationError("n_bins must be in [2, 255]")
        if self.min_hessian <= 0:
            raise ValidationError("min_hessian must be positive")


@dataclass(frozen=True)
class Imputer:
    medians: Tuple[float, ...]

    @classmethod
    def fit(cls, values: np.ndarray) -> "Imputer":
        medians = []
        for j in range(values.shape[1]):
            col = values[:, j]
            col = col[~np.isnan(col)]
            medians.append(float(np.median(col)) if col.size else 0.0)
        return cls(tuple(medians))

    def transform(self, values: np.ndarray) -> np.ndarray:
        if values.shape[1] != len(self.medians):
            raise SchemaMismatchError(f"imputer expects {len(self.medians)} columns, got {values.shape[1]}")
        med = np.asarray(self.medians, dtype=float)
        return np.where(np.isnan(values), med, values)


@dataclass(frozen=True)
class Binner:
    """Per-feature bin edges; value x falls in bin searchsorted(edges, x, 'left')."""

    edges: Tuple[np.ndarray, ...]

    @classmethod
    def fit(cls, X: np.ndarray, n_bins: int) -> "Binner":
        edges = []
        for j in range(X.shape[1]):
            distinct = np.unique(X[:, j])
            if distinct.size <= n_bins:
                e = (distinct[:-1] + distinct[1:]) / 2.0
            else:
                qs = np.linspace(0.0, 100.0, n_bins + 1)[1:-1]
                e = np.unique(np.percentile(X[:, j], qs, method="midpoint"))
            edges.append(np.ascontiguousarray(e, dtype=float))
        return cls(tuple(edges))

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.uint8, order="F")
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out

    def n_bins(self, j: int) -> int:
        return self.edges[j].size + 1


@dataclass(eq=False)
class Tree:
    """Flattened binary tree; feature == -1 marks a leaf. Left branch is x <= threshold."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    count: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            active = np.flatnonzero(f >= 0)
            if active.size == 0:
                return node
            nd = node[active]
            go_left = X[active, f[active]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_doc(self) -> Dict[str, list]:
        return {
            "feature": [int(x) for x in self.feature],
            "threshold": [float(x) for x in self.threshold],
            "left": [int(x) for x in self.left],
            "right": [int(x) for x in self.right],
            "value": [float(x) for x in self.value],
            "gain": [float(x) for x in self.gain],
            "count": [int(x) for x in self.count],
        }

    @classmethod
    def from_doc(cls, doc: Dict[str, list]) -> "Tree":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int64),
            threshold=np.asarray(doc["threshold"], dtype=float),
            left=np.asarray(doc["left"], dtype=np.int64),
            right=np.asarray(doc["right"], dtype=np.int64),
            value=np.asarray(doc["value"], dtype=float),
            gain=np.asarray(doc["gain"], dtype=float),
            count=np.asarray(doc["count"], dtype=np.int64),
        )


@dataclass(frozen=True)
class BoostedModel:
    base_score: float
    trees: Tuple[Tree, ...]
    imputer: Imputer
    feature_names: Tuple[str, ...]
    schema_version: str
    hyperparams: Hyperparams
    parent_schema: Optional[str] = None
    history: Tuple[float, ...] = field(default=(), compare=False)

    def accepts(self, schema_version: str) -> bool:
        return schema_version in (self.schema_version, self.parent_schema)

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        Xi = self.imputer.transform(X)
        raw = np.full(Xi.shape[0], self.base_score, dtype=float)
        for t in self.trees:
            raw += t.predict_raw(Xi)
        return raw


# ----------------------------- training -----------------------------

def log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    # log(1 + e^z) - y z, stable for large |z|
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def _sigmoid(raw: np.ndarray) -> np.ndarray:
    return expit(np.clip(raw, -RAW_CLIP, RAW_CLIP))


@dataclass
class _Hist:
    g: np.ndarray  # (k, B)
    h: np.ndarray
    c: np.ndarray


@dataclass
class _Leaf:
    idx: np.ndarray
    hist: _Hist
    G: float
    H: float
    node_id: int
    gain: float = -math.inf
    feature: int = -1
    bin: int = -1


class _Grower:
    """Grows one tree leaf-wise on binned data."""

    def __init__(self, binned: np.ndarray, binner: Binner, g: np.ndarray, h: np.ndarray, hp: Hyperparams):
        self.binned = binned
        self.binner = binner
        self.g = g
        self.h = h
        self.hp = hp
        self.k = binned.shape[1]
        self.B = 256
        self.n_bins = np.array([binner.n_bins(j) for j in range(self.k)])
        bins = np.arange(self.B)
        self.bin_valid = bins[None, :] < (self.n_bins[:, None] - 1)
        self.nodes: List[dict] = []

    def _histogram(self, idx: np.ndarray) -> _Hist:
        gi, hi = self.g[idx], self.h[idx]
        G = np.empty((self.k, self.B))
        H = np.empty((self.k, self.B))
        C = np.empty((self.k, self.B))
        for j in range(self.k):
            col = self.binned[idx, j]
            G[j] = np.bincount(col, weights=gi, minlength=self.B)
            H[j] = np.bincount(col, weights=hi, minlength=self.B)
            C[j] = np.bincount(col, minlength=self.B)
        return _Hist(G, H, C)

    def _best_split(self, leaf: _Leaf) -> None:
        hp = self.hp
        lam = hp.l2_reg
        hist = leaf.hist
        GL = np.cumsum(hist.g, axis=1)
        HL = np.cumsum(hist.h, axis=1)
        CL = np.cumsum(hist.c, axis=1)
        n = float(leaf.idx.size)
        GR, HR, CR = leaf.G - GL, leaf.H - HL, n - CL
        ok = (
            self.bin_valid
            & (CL >= hp.min_samples_leaf)
            & (CR >= hp.min_samples_leaf)
            & (HL >= hp.min_hessian)
            & (HR >= hp.min_hessian)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - leaf.G * leaf.G / (leaf.H + lam))
        gain = np.where(ok, gain, -np.inf)
        flat = int(np.argmax(gain))  # first max: lowest feature, then lowest bin
        best = float(gain.flat[flat])
        if best > 0.0:
            leaf.gain, leaf.feature, leaf.bin = best, flat // self.B, flat % self.B

    def _node(self, count: int) -> int:
        self.nodes.append({"feature": -1, "threshold": 0.0, "left": -1, "right": -1, "value": 0.0, "gain": 0.0, "count": count})
        return len(self.nodes) - 1

    def _leaf_value(self, G: float, H: float) -> float:
        denom = H + self.hp.l2_reg
        if denom <= 0:
            return 0.0
        return self.hp.learning_rate * (-G / denom)

    def grow(self, idx: np.ndarray) -> Tuple[Tree, List[Tuple[np.ndarray, float]]]:
        hist = self._histogram(idx)
        root = _Leaf(idx, hist, float(self.g[idx].sum()), float(self.h[idx].sum()), self._node(idx.size))
        self._best_split(root)
        heap: List[Tuple[float, int, _Leaf]] = []
        counter = 0
        if root.feature >= 0:
            heapq.heappush(heap, (-root.gain, counter, root))
        finished: List[_Leaf] = [] if root.feature >= 0 else [root]
        n_leaves = 1

        while heap and n_leaves < self.hp.max_leaves:
            _, _, leaf = heapq.heappop(heap)
            j, b = leaf.feature, leaf.bin
            go_left = self.binned[leaf.idx, j] <= b
            left_idx, right_idx = leaf.idx[go_left], leaf.idx[~go_left]
            if left_idx.size <= right_idx.size:
                lh = self._histogram(left_idx)
                rh = _Hist(leaf.hist.g - lh.g, leaf.hist.h - lh.h, leaf.hist.c - lh.c)
            else:
                rh = self._histogram(right_idx)
                lh = _Hist(leaf.hist.g - rh.g, leaf.hist.h - rh.h, leaf.hist.c - rh.c)
            left = _Leaf(left_idx, lh, float(self.g[left_idx].sum()), float(self.h[left_idx].sum()), self._node(left_idx.size))
            right = _Leaf(right_idx, rh, float(self.g[right_idx].sum()), float(self.h[right_idx].sum()), self._node(right_idx.size))
            node = self.nodes[leaf.node_id]
            node.update(
                feature=j,
                threshold=float(self.binner.edges[j][b]),
                left=left.node_id,
                right=right.node_id,
                gain=leaf.gain,
            )
            n_leaves += 1
            for child in (left, right):
                self._best_split(child)
                if child.feature >= 0:
                    counter += 1
                    heapq.heappush(heap, (-child.gain, counter, child))
                else:
                    finished.append(child)

        finished.extend(item[2] for item in heap)
        updates = []
        for leaf in finished:
            v = self._leaf_value(leaf.G, leaf.H)
            self.nodes[leaf.node_id]["value"] = v
            updates.append((leaf.idx, v))
        tree = Tree(
            feature=np.array([n["feature"] for n in self.nodes], dtype=np.int64),
            threshold=np.array([n["threshold"] for n in self.nodes], dtype=float),
            left=np.array([n["left"] for n in self.nodes], dtype=np.int64),
            right=np.array([n["right"] for n in self.nodes], dtype=np.int64),
            value=np.array([n["value"] for n in self.nodes], dtype=float),
            gain=np.array([n["gain"] for n in self.nodes], dtype=float),
            count=np.array([n["count"] for n in self.nodes], dtype=np.int64),
        )
        return tree, updates


def fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    feature_names: Sequence[str],
    schema_version: str,
    parent_schema: Optional[str] = None,
) -> BoostedModel:
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise TrainingError("cannot train on an empty feature matrix")
    if X.shape[0] != y.shape[0]:
        raise TrainingError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    pos = float(y.sum())
    if pos == 0 or pos == y.shape[0]:
        raise TrainingError("labels contain a single class; use the base rate instead of a model")

    imputer = Imputer.fit(X)
    Xi = imputer.transform(X)
    binner = Binner.fit(Xi, hp.n_bins)
    binned = binner.transform(Xi)

    prior = pos / y.shape[0]
    base = math.log(prior / (1.0 - prior))
    raw = np.full(y.shape[0], base)
    history = [log_loss(y, raw)]
    trees: List[Tree] = []
    all_idx = np.arange(y.shape[0])
    for r in range(hp.n_trees):
        p = _sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        tree, updates = _Grower(binned, binner, g, h, hp).grow(all_idx)
        for idx, v in updates:
            raw[idx] += v
        trees.append(tree)
        history.append(log_loss(y, raw))
        if (r + 1) % 50 == 0:
            logger.debug("round %d log-loss %.6f", r + 1, history[-1])
    logger.info("[OK] trained trees=%d rows=%d log-loss %.6f -> %.6f", len(trees), y.shape[0], history[0], history[-1])
    return BoostedModel(
        base_score=base,
        trees=tuple(trees),
        imputer=imputer,
        feature_names=tuple(feature_names),
        schema_version=schema_version,
        hyperparams=hp,
        parent_schema=parent_schema,
        history=tuple(history),
    )


def fit(matrix: FeatureMatrix, labels: Sequence[int] | np.ndarray, hp: Hyperparams, parent_schema: Optional[str] = None) -> BoostedModel:
    return fit_arrays(matrix.values, np.asarray(labels), hp, matrix.names, matrix.schema_version, parent_schema)


# ----------------------------- inference -----------------------------

def _columns_for(model: BoostedModel, matrix: FeatureMatrix) -> np.ndarray:
    if not model.accepts(matrix.schema_version):
        raise SchemaMismatchError(
            f"feature schema {matrix.schema_version} does not match model schema {model.schema_version}"
        )
    if matrix.names == model.feature_names:
        return matrix.values
    return matrix.select(model.feature_names).values


def predict_matrix(model: BoostedModel, matrix: FeatureMatrix) -> np.ndarray:
    return _sigmoid(model.raw_scores(_columns_for(model, matrix)))


def predict(model: BoostedModel, vector: FeatureVector) -> float:
    row = FeatureMatrix((vector.member_id,), vector.names, vector.as_array()[None, :], vector.schema_version)
    return float(predict_matrix(model, row)[0])


def split_importance(model: BoostedModel) -> Dict[str, float]:
    totals = np.zeros(len(model.feature_names))
    for t in model.trees:
        split = t.feature >= 0
        np.add.at(totals, t.feature[split], t.gain[split])
    top = totals.max() if totals.size else 0.0
    if top > 0:
        totals = totals / top
    return {n: float(v) for n, v in zip(model.feature_names, totals)}


# ----------------------------- model file -----------------------------

def model_to_doc(model: BoostedModel) -> dict:
    return {
        "magic": MODEL_MAGIC,
        "format_version": MODEL_FORMAT_VERSION,
        "schema_version": model.schema_version,
        "parent_schema": model.parent_schema,
        "feature_names": list(model.feature_names),
        "hyperparams": asdict(model.hyperparams),
        "base_score": model.base_score,
        "imputer": list(model.imputer.medians),
        "trees": [t.to_doc() for t in model.trees],
    }


def save_model(model: BoostedModel, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(model_to_doc(model), sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    return p


def load_model(path: str | Path) -> BoostedModel:
    p = Path(path)
    if not p.exists():
        raise TrainingError(f"model file not found: {p}")
    doc = json.loads(p.read_text(encoding="utf-8"))
    if doc.get("magic") != MODEL_MAGIC:
        raise SchemaMismatchError(f"{p} is not a model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise SchemaMismatchError(f"unsupported model format {doc.get('format_version')} in {p}")
    return BoostedModel(
        base_score=float(doc["base_score"]),
        trees=tuple(Tree.from_doc(t) for t in doc["trees"]),
        imputer=Imputer(tuple(float(x) for x in doc["imputer"])),
        feature_names=tuple(doc["feature_names"]),
        schema_version=doc["schema_version"],
        hyperparams=Hyperparams(**doc["hyperparams"]),
        parent_schema=doc.get("parent_schema"),
    )
