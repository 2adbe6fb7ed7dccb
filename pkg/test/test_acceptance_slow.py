from __future__ import annotations

import time

import numpy as np
import pytest

from hicc.baseline import fit_baseline
from hicc.calibration import load_calibrator
from hicc.evalkit import auc_score
from hicc.features import read_matrix
from hicc.gbdt import load_model
from hicc.loaders import default_config_path, load_config
from hicc.pipeline import STAGES, read_cohort, read_scores, run_pipeline, score_matrix
from hicc.synthgen import GenParams, generate_population, validate_generated

pytestmark = pytest.mark.slow

SEEDS = (11, 23, 37)


def _config(tmp_path, seed):
    return load_config(default_config_path(), {
        "seed": str(seed),
        "paths.workdir": str(tmp_path / f"run{seed}"),
        "generate.n_members": "200000",
        "generate.hicc_prevalence": "0.01",
        "economics.hicc_rate": "0.01",
        "evaluate.audit_plot": "false",
    })


@pytest.fixture(scope="module", params=SEEDS)
def large_run(request, tmp_path_factory):
    cfg = _config(tmp_path_factory.mktemp("large"), request.param)
    run_pipeline(cfg)
    return cfg


def test_model_beats_prior_cost_baseline(large_run):
    cfg = large_run
    cohort = read_cohort(cfg.paths.cohort)
    scores = read_scores(cfg.paths.scores)
    matrix = read_matrix(cfg.paths.features)
    y = cohort["label_hicc"].to_numpy(dtype=int)
    hold = np.flatnonzero(cohort["split"].to_numpy() == "holdout")
    train = np.flatnonzero(cohort["split"].to_numpy() == "train")

    auc = auc_score(scores["score"].to_numpy(dtype=float)[hold], y[hold])
    base = fit_baseline(matrix.take(train), y[train])
    base_auc = auc_score(base.predict(matrix.take(hold)), y[hold])
    assert auc >= 0.85
    assert auc - base_auc >= 0.03


def test_scoring_throughput(large_run):
    cfg = large_run
    model = load_model(cfg.paths.model)
    matrix = read_matrix(cfg.paths.features)
    cal = load_calibrator(cfg.paths.calibrator)
    t0 = time.perf_counter()
    score_matrix(model, matrix, cal, cfg.workers)
    elapsed = time.perf_counter() - t0
    assert 60.0 * len(matrix) / elapsed >= 400_000


def test_generator_statistics_at_scale(tmp_path):
    params = GenParams(n_members=1_000_000, hicc_prevalence=0.0016, seed=20190401)
    report = validate_generated(generate_population(params, tmp_path / "gen", workers=4), params)
    assert abs(report.n_hicc - 1_600) <= 160
    assert report.check("mean_hicc_cost").realized == pytest.approx(413_975, rel=0.10)
    assert report.check("frac_pharmacy").realized == pytest.approx(0.63, abs=0.006)


def _holdout_auc(cfg):
    cohort = read_cohort(cfg.paths.cohort)
    scores = read_scores(cfg.paths.scores)
    hold = cohort["split"].to_numpy() == "holdout"
    return auc_score(scores["score"].to_numpy(dtype=float)[hold], cohort["label_hicc"].to_numpy(dtype=int)[hold])


@pytest.mark.parametrize("seed", SEEDS)
def test_stronger_planted_signal_never_lowers_auc(tmp_path, seed):
    aucs = []
    for strength in (0.25, 2.0):
        cfg = load_config(default_config_path(), {
            "seed": str(seed),
            "paths.workdir": str(tmp_path / f"s{strength}"),
            "generate.n_members": "50000",
            "generate.hicc_prevalence": "0.02",
            "generate.signal_strength": str(strength),
        })
        for stage in ("generate", "featurize", "train", "calibrate", "score"):
            STAGES[stage](cfg)
        aucs.append(_holdout_auc(cfg))
    assert aucs[1] >= aucs[0]
