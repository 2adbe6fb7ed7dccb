from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from hicc.calibration import load_calibrator
from hicc.cli import main, parse_overrides
from hicc.errors import ConfigError
from hicc.features import read_matrix
from hicc.gbdt import load_model
from hicc.pipeline import COHORT_COLUMNS, score_matrix

TINY = """\
seed: 7
workers: 1
periods:
  report_start: 2017-04-01
  report_end: 2018-03-31
paths:
  workdir: run
generate:
  n_members: 1500
  hicc_prevalence: 0.03
  signal_strength: 1.5
model:
  n_trees: 20
  max_leaves: 8
  min_samples_leaf: 5
  learning_rate: 0.1
train:
  learning_rates: [0.1, 0.2]
  permutation_repeats: 1
evaluate:
  audit_plot: true
  audit_permutations: 5
"""

ARTIFACTS = (
    "data/claims.csv",
    "data/enrollment.csv",
    "data/members.csv",
    "data/sdoh.csv",
    "data/gen_manifest.txt",
    "features.csv",
    "features.csv.schema.yaml",
    "cohort.csv",
    "model.json",
    "calibrator.json",
    "scores.csv",
    "reports/generation_validation.txt",
    "reports/split_importance.csv",
    "reports/staged_selection.csv",
    "reports/permutation_importance.csv",
    "reports/threshold_metrics.csv",
    "reports/threshold_metrics.txt",
    "reports/roc_curve.csv",
    "reports/pr_curve.csv",
    "reports/stratified.csv",
    "reports/stratified.txt",
    "reports/evaluation_summary.txt",
    "reports/savings.csv",
    "reports/savings.txt",
    "reports/capacity_sweep.csv",
    "reports/capacity_sweep.txt",
    "reports/zip_scatter.csv",
    "reports/audit.txt",
    "reports/zip_scatter.png",
)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    config = root / "tiny.yaml"
    config.write_text(TINY, encoding="utf-8")
    assert main(["pipeline", "--config", str(config)]) == 0
    return config, root / "run"


def test_pipeline_writes_every_artifact(tiny_run):
    _, workdir = tiny_run
    missing = [a for a in ARTIFACTS if not (workdir / a).exists()]
    assert missing == []


def test_cohort_and_scores_line_up(tiny_run):
    _, workdir = tiny_run
    cohort = pd.read_csv(workdir / "cohort.csv", dtype={"member_id": str, "zip": str}, keep_default_na=False)
    scores = pd.read_csv(workdir / "scores.csv", dtype={"member_id": str})
    assert list(cohort.columns) == list(COHORT_COLUMNS)
    assert cohort["member_id"].tolist() == scores["member_id"].tolist()
    assert set(cohort["split"]) == {"train", "calibration", "holdout"}
    assert cohort.groupby("split")["label_hicc"].sum().min() > 0
    assert scores["score"].between(0.0, 1.0).all()


def test_rescoring_is_byte_identical(tiny_run):
    config, workdir = tiny_run
    before = (workdir / "scores.csv").read_bytes()
    assert main(["score", "--config", str(config)]) == 0
    assert (workdir / "scores.csv").read_bytes() == before


def test_parallel_scoring_matches_serial(tiny_run):
    _, workdir = tiny_run
    model = load_model(workdir / "model.json")
    matrix = read_matrix(workdir / "features.csv")
    cal = load_calibrator(workdir / "calibrator.json")
    np.testing.assert_array_equal(score_matrix(model, matrix, cal, 1), score_matrix(model, matrix, cal, 3))


def test_reports_mention_headline_measures(tiny_run):
    _, workdir = tiny_run
    summary = (workdir / "reports" / "evaluation_summary.txt").read_text(encoding="utf-8")
    assert "AUC-ROC" in summary and "Brier score, calibrated" in summary
    savings = (workdir / "reports" / "savings.txt").read_text(encoding="utf-8")
    assert "Rule-based (stated)" in savings and "ML model" in savings
    assert "-$4,379,038" in savings
    thresholds = pd.read_csv(workdir / "reports" / "threshold_metrics.csv", dtype=str, keep_default_na=False)
    assert thresholds["threshold"].tolist() == ["0.5", "0.6", "0.7", "0.76", "0.8", "0.9", "1"]


def test_missing_config_key_exits_nonzero(tmp_path, capsys):
    config = tmp_path / "broken.yaml"
    config.write_text("seed: 1\nperiods:\n  report_start: 2017-04-01\npaths:\n  workdir: out\n", encoding="utf-8")
    assert main(["featurize", "--config", str(config)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("[ERROR] missing config key 'periods.report_end'")


def test_unknown_override_exits_nonzero(tiny_run, capsys):
    config, _ = tiny_run
    assert main(["score", "--config", str(config), "--model.depth", "3"]) == 2
    assert "unknown config key 'model.depth'" in capsys.readouterr().err


def test_stage_without_inputs_reports_error(tmp_path, capsys):
    config = tmp_path / "cfg.yaml"
    config.write_text(TINY, encoding="utf-8")
    assert main(["evaluate", "--config", str(config), "--workdir", str(tmp_path / "empty")]) == 2
    assert "[ERROR]" in capsys.readouterr().err


def test_parse_overrides():
    assert parse_overrides(["--n_trees", "5", "--generate.n_members=100"]) == {
        "n_trees": "5",
        "generate.n_members": "100",
    }
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])
    with pytest.raises(ConfigError):
        parse_overrides(["--n_trees"])
