from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .catalog import FeatureCatalog
from .errors import TrainingError, ValidationError
from .evalkit import auc_score
from .features import FeatureMatrix
from .gbdt import BoostedModel, Hyperparams, fit, predict_matrix

logger = logging.getLogger(__name__)

Trainer = Callable[[FeatureMatrix, np.ndarray], BoostedModel]


def stratified_split(labels: Sequence[int] | np.ndarray, fractions: Sequence[float], seed: int) -> List[np.ndarray]:
    """Disjoint sorted index sets with the given shares of each class; the last part takes the remainder."""
    y = np.asarray(labels).astype(bool)
    rng = np.random.default_rng(seed)
    parts: List[List[np.ndarray]] = [[] for _ in fractions]
    for cls in (True, False):
        idx = rng.permutation(np.flatnonzero(y == cls))
        cuts = np.round(np.cumsum(fractions) * idx.size).astype(int)
        cuts[-1] = idx.size
        start = 0
        for i, end in enumerate(cuts):
            parts[i].append(idx[start:end])
            start = end
    return [np.sort(np.concatenate(p)) for p in parts]


def downsample(labels: Sequence[int] | np.ndarray, target_n: int, seed: int) -> np.ndarray:
    """Keep every positive; sample negatives without replacement up to target_n rows."""
    y = np.asarray(labels).astype(bool)
    pos = np.flatnonzero(y)
    neg = np.flatnonzero(~y)
    if target_n < pos.size:
        raise ValidationError(f"downsample target {target_n} is below the positive count {pos.size}")
    n_neg = target_n - pos.size
    if n_neg >= neg.size:
        if n_neg > neg.size:
            logger.warning("[WARN] downsample target %d exceeds population %d; keeping all rows", target_n, y.size)
        return np.arange(y.size)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(neg, size=n_neg, replace=False)
    return np.sort(np.concatenate([pos, chosen]))


# ----------------------------- staged selection -----------------------------

@dataclass(frozen=True)
class RoundRecord:
    round: int
    fraction: float
    rows: int
    candidate: int
    learning_rate: float
    auc: Optional[float]
    survived: bool


@dataclass(frozen=True)
class SelectionResult:
    best: Hyperparams
    best_index: int
    model: BoostedModel
    rounds: Tuple[RoundRecord, ...]


def _holdout_auc(model: BoostedModel, matrix: FeatureMatrix, labels: np.ndarray) -> Optional[float]:
    return auc_score(predict_matrix(model, matrix), labels)


def staged_select(
    candidates: Sequence[Hyperparams],
    matrix: FeatureMatrix,
    labels: Sequence[int] | np.ndarray,
    fractions: Sequence[float] = (0.16, 0.32, 0.64),
    seed: int = 0,
    selection_fraction: float = 0.2,
    parent_schema: Optional[str] = None,
) -> SelectionResult:
    """
    Successive halving: each round trains the surviving candidates on a growing share of
    the training pool and scores AUC-ROC on a fixed selection split; the top half survives.
    The winner is refit on the full matrix.
    """
    if not candidates:
        raise ValidationError("staged_select needs at least one candidate")
    y = np.asarray(labels).astype(int)
    records: List[RoundRecord] = []
    alive = list(range(len(candidates)))

    if len(candidates) > 1:
        sel_idx, pool_idx = stratified_split(y, (selection_fraction, 1.0 - selection_fraction), seed)
        pool_idx = np.random.default_rng(seed + 1).permutation(pool_idx)
        sel = matrix.take(sel_idx)
        for r, frac in enumerate(fractions, start=1):
            n_rows = max(1, int(round(frac * pool_idx.size)))
            sub_idx = np.sort(pool_idx[:n_rows])
            sub = matrix.take(sub_idx)
            scored: List[Tuple[int, float, Optional[float]]] = []
            for ci in alive:
                try:
                    model = fit(sub, y[sub_idx], candidates[ci], parent_schema)
                    auc = _holdout_auc(model, sel, y[sel_idx])
                except TrainingError as exc:
                    logger.warning("[WARN] candidate %d failed in round %d: %s", ci, r, exc)
                    auc = None
                scored.append((ci, -1.0 if auc is None else auc, auc))
            keep = max(1, len(alive) // 2)
            ranked = sorted(scored, key=lambda t: -t[1])  # stable: ties keep candidate order
            survivors = {ci for ci, _, _ in ranked[:keep]}
            for ci, _, auc in scored:
                records.append(RoundRecord(r, frac, n_rows, ci, candidates[ci].learning_rate, auc, ci in survivors))
            alive = [ci for ci in alive if ci in survivors]
            logger.info("[OK] selection round %d rows=%d survivors=%s", r, n_rows, alive)
            if len(alive) == 1:
                break

    best_index = alive[0]
    best = candidates[best_index]
    model = fit(matrix, y, best, parent_schema)
    return SelectionResult(best, best_index, model, tuple(records))


def candidate_grid(base: Hyperparams, learning_rates: Sequence[float]) -> List[Hyperparams]:
    return [replace(base, learning_rate=float(lr)) for lr in learning_rates]


# ----------------------------- importance and pruning -----------------------------

def permutation_importance(
    model: BoostedModel,
    matrix: FeatureMatrix,
    labels: Sequence[int] | np.ndarray,
    repeats: int = 5,
    seed: int = 0,
) -> Dict[str, float]:
    """Mean AUC-ROC drop when one column is shuffled, per model feature."""
    y = np.asarray(labels).astype(int)
    view = matrix.select(model.feature_names) if matrix.names != model.feature_names else matrix
    base = auc_score(predict_matrix(model, view), y)
    if base is None:
        raise ValidationError("permutation importance needs both classes in the validation data")
    rng = np.random.default_rng(seed)
    X = view.values
    out: Dict[str, float] = {}
    for j, name in enumerate(model.feature_names):
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            permuted = FeatureMatrix(view.member_ids, view.names, Xp, view.schema_version)
            drops.append(base - auc_score(predict_matrix(model, permuted), y))  # type: ignore[operator]
        out[name] = float(np.mean(drops)) if drops else 0.0
    return out


@dataclass(frozen=True)
class PruneResult:
    catalog: FeatureCatalog
    ranking: Tuple[Tuple[str, float], ...]
    kept: Tuple[str, ...]


def prune_features(
    matrix: FeatureMatrix,
    labels: Sequence[int] | np.ndarray,
    trainer: Trainer,
    keep_k: int,
    catalog: FeatureCatalog,
    repeats: int = 3,
    seed: int = 0,
    validation_fraction: float = 0.2,
) -> PruneResult:
    y = np.asarray(labels).astype(int)
    val_idx, train_idx = stratified_split(y, (validation_fraction, 1.0 - validation_fraction), seed)
    model = trainer(matrix.take(train_idx), y[train_idx])
    importance = permutation_importance(model, matrix.take(val_idx), y[val_idx], repeats, seed)
    order = {n: i for i, n in enumerate(catalog.names)}
    ranking = tuple(sorted(importance.items(), key=lambda kv: (-kv[1], order.get(kv[0], len(order)))))
    if keep_k >= len(catalog):
        if keep_k > len(catalog):
            logger.warning("[WARN] keep_k=%d exceeds feature count %d; keeping all", keep_k, len(catalog))
        return PruneResult(catalog, ranking, catalog.names)
    if keep_k < 1:
        raise ValidationError("keep_k must be >= 1")
    kept = tuple(n for n, _ in ranking[:keep_k])
    reduced = catalog.subset(kept)
    logger.info("[OK] pruned catalog %d -> %d features", len(catalog), len(reduced))
    return PruneResult(reduced, ranking, reduced.names)
