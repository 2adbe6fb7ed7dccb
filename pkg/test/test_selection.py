from __future__ import annotations

import logging

import numpy as np
import pytest

from hicc.catalog import FeatureCatalog, FeatureDef
from hicc.errors import ValidationError
from hicc.features import FeatureMatrix
from hicc.gbdt import Hyperparams, fit
from hicc.selection import (
    candidate_grid,
    downsample,
    permutation_importance,
    prune_features,
    staged_select,
    stratified_split,
)

QUARTERS = ("ALLWD_AMT_Q1", "ALLWD_AMT_Q2", "ALLWD_AMT_Q3", "ALLWD_AMT_Q4")
SMALL_HP = Hyperparams(n_trees=8, max_leaves=4, min_samples_leaf=10, learning_rate=0.2)


def _toy(n=800, seed=0):
    """Q1 carries the signal, Q2 duplicates Q1, Q3 is constant and Q4 is noise."""
    rng = np.random.default_rng(seed)
    signal = rng.normal(size=n)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-3.0 * signal))).astype(int)
    X = np.column_stack([signal, signal, np.full(n, 7.0), rng.normal(size=n)])
    catalog = FeatureCatalog("toy", "1", tuple(FeatureDef(q, "cost") for q in QUARTERS), {})
    matrix = FeatureMatrix(tuple(f"M{i:08d}" for i in range(n)), QUARTERS, X, catalog.schema_version)
    return matrix, y, catalog


def test_stratified_split_preserves_class_shares():
    y = np.array([1] * 50 + [0] * 950)
    parts = stratified_split(y, (0.6, 0.2, 0.2), seed=3)
    assert [int(y[p].sum()) for p in parts] == [30, 10, 10]
    assert [p.size for p in parts] == [600, 200, 200]
    joined = np.concatenate(parts)
    assert np.array_equal(np.sort(joined), np.arange(1000))
    assert all(np.all(np.diff(p) > 0) for p in parts)
    again = stratified_split(y, (0.6, 0.2, 0.2), seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))


def test_downsample_keeps_every_positive():
    y = np.zeros(3_200_000, dtype=np.int8)
    y[::50][:61_277] = 1
    kept = downsample(y, 3_000_000, seed=42)
    assert kept.size == 3_000_000
    assert int(y[kept].sum()) == 61_277
    assert int((y[kept] == 0).sum()) == 2_938_723
    assert np.array_equal(kept, downsample(y, 3_000_000, seed=42))
    assert not np.array_equal(kept, downsample(y, 3_000_000, seed=43))


def test_downsample_bounds(caplog):
    y = np.array([1, 1, 1, 0, 0, 0, 0])
    with pytest.raises(ValidationError, match="below the positive count"):
        downsample(y, 2, seed=0)
    with caplog.at_level(logging.WARNING):
        assert np.array_equal(downsample(y, 100, seed=0), np.arange(7))
    assert "exceeds population" in caplog.text
    assert downsample(y, 3, seed=0).tolist() == [0, 1, 2]


def test_single_candidate_skips_rounds():
    matrix, y, _ = _toy()
    result = staged_select([SMALL_HP], matrix, y, seed=1)
    assert result.best_index == 0
    assert result.rounds == ()
    assert result.model.hyperparams == SMALL_HP
    assert len(result.model.trees) == SMALL_HP.n_trees


def test_one_full_round_picks_a_survivor():
    matrix, y, _ = _toy()
    candidates = candidate_grid(SMALL_HP, [0.05, 0.3])
    result = staged_select(candidates, matrix, y, fractions=[1.0], seed=1)
    assert len(result.rounds) == 2
    assert sum(r.survived for r in result.rounds) == 1
    assert result.best is candidates[result.best_index]
    aucs = {r.candidate: r.auc for r in result.rounds}
    assert aucs[result.best_index] == max(aucs.values())


def test_halving_schedule():
    matrix, y, _ = _toy(n=1200)
    candidates = candidate_grid(SMALL_HP, [0.02, 0.05, 0.1, 0.3])
    result = staged_select(candidates, matrix, y, fractions=(0.16, 0.32, 0.64), seed=2)
    per_round = [sum(1 for r in result.rounds if r.round == k) for k in (1, 2, 3)]
    assert per_round == [4, 2, 0]
    rows = sorted({(r.round, r.rows) for r in result.rounds})
    assert rows[0][1] < rows[1][1]


def test_constant_and_duplicate_columns_have_zero_importance():
    matrix, y, _ = _toy()
    model = fit(matrix, y, SMALL_HP)
    imp = permutation_importance(model, matrix, y, repeats=3, seed=0)
    assert imp["ALLWD_AMT_Q3"] == 0.0
    # ties split on the lowest feature index, so the copy is never used
    assert imp["ALLWD_AMT_Q2"] == 0.0
    assert imp["ALLWD_AMT_Q1"] > 0.05


def test_prune_keeps_one_copy_of_a_duplicate():
    matrix, y, catalog = _toy()
    result = prune_features(matrix, y, lambda m, lab: fit(m, lab, SMALL_HP), keep_k=1, catalog=catalog, seed=4)
    assert result.kept == ("ALLWD_AMT_Q1",)
    assert result.catalog.names == ("ALLWD_AMT_Q1",)
    assert result.catalog.version == "1.pruned1"
    assert [n for n, _ in result.ranking][0] == "ALLWD_AMT_Q1"


def test_prune_keep_k_bounds(caplog):
    matrix, y, catalog = _toy()
    trainer = lambda m, lab: fit(m, lab, SMALL_HP)  # noqa: E731
    with caplog.at_level(logging.WARNING):
        result = prune_features(matrix, y, trainer, keep_k=10, catalog=catalog)
    assert result.catalog is catalog
    assert "exceeds feature count" in caplog.text
    with pytest.raises(ValidationError):
        prune_features(matrix, y, trainer, keep_k=0, catalog=catalog)


def _graded(n, seed):
    """Column 0 is strong, columns 1..8 carry equal moderate signal, column 9 is label-independent."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 10))
    logit = 3.0 * X[:, 0] + X[:, 1:9].sum(axis=1)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(int)
    names = tuple(f"DX_T{j}" for j in range(10))
    feats = tuple(FeatureDef(nm, "category", {"field": "condition_code", "codes": [nm]}) for nm in names)
    catalog = FeatureCatalog("graded", "1", feats, {})
    matrix = FeatureMatrix(tuple(f"M{i:08d}" for i in range(n)), names, X, catalog.schema_version)
    return matrix, y, catalog


GRADED_HP = Hyperparams(n_trees=40, max_leaves=8, min_samples_leaf=50, learning_rate=0.2)


def test_noise_column_importance_is_near_zero():
    matrix, y, _ = _graded(10_000, seed=8)
    val, tr = stratified_split(y, (0.5, 0.5), seed=8)
    model = fit(matrix.take(tr), y[tr], GRADED_HP)
    imp = permutation_importance(model, matrix.take(val), y[val], repeats=10, seed=3)
    assert abs(imp["DX_T9"]) <= 0.005
    assert max(imp, key=imp.get) == "DX_T0"


def test_prune_ranks_noise_in_the_bottom_decile():
    matrix, y, catalog = _graded(20_000, seed=9)
    result = prune_features(
        matrix, y, lambda m, lab: fit(m, lab, GRADED_HP), keep_k=5, catalog=catalog, repeats=10, seed=2
    )
    order = [n for n, _ in result.ranking]
    assert order[0] == "DX_T0"
    assert order[-1] == "DX_T9"
    assert "DX_T9" not in result.kept


def test_overfitting_learning_rate_loses_the_tournament():
    rng = np.random.default_rng(11)
    n = 8_000
    X = rng.normal(size=(n, 4))
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(X[:, 0] - X[:, 1])))).astype(int)
    matrix = FeatureMatrix(tuple(f"M{i:08d}" for i in range(n)), ("S0", "S1", "N0", "N1"), X, "toy-1-abc")
    base = Hyperparams(n_trees=60, max_leaves=32, min_samples_leaf=2, learning_rate=0.05)
    candidates = candidate_grid(base, [0.05, 0.9])
    result = staged_select(candidates, matrix, y, fractions=(0.5,), seed=5)
    assert result.best.learning_rate == 0.05
    survived = {r.candidate: r.survived for r in result.rounds}
    assert survived == {0: True, 1: False}
    aucs = {r.candidate: r.auc for r in result.rounds}
    assert aucs[0] > aucs[1]
