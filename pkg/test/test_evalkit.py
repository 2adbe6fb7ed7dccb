from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from hicc.claims import AgeBand, CohortTags, Gender
from hicc.errors import ValidationError
from hicc.evalkit import (
    NA,
    ConfusionCounts,
    ScoredMember,
    auc_score,
    best_threshold,
    brier_score,
    confusion_at,
    derive_metrics,
    fmt_pct,
    pr_auc,
    precision_at_k,
    roc_auc,
    stratified_report,
    threshold_agreement,
    top_k_positives,
)


def test_metrics_on_holdout_scale_counts():
    m = derive_metrics(ConfusionCounts(tp=6553, fp=28102, fn=8498, tn=9641126))
    assert fmt_pct(m.recall) == "43.54%"
    assert fmt_pct(m.precision) == "18.91%"
    assert fmt_pct(m.tnr) == "99.71%"
    assert fmt_pct(m.npv) == "99.91%"

    m = derive_metrics(ConfusionCounts(tp=3258, fp=4049, fn=11793, tn=9665179))
    assert fmt_pct(m.recall) == "21.65%"
    assert fmt_pct(m.precision) == "44.59%"

    m = derive_metrics(ConfusionCounts(tp=4967, fp=11632, fn=10084, tn=9657596))
    assert m.mcc == pytest.approx(0.313, abs=5e-4)
    assert m.f1 == pytest.approx(0.314, abs=5e-4)


def test_no_predicted_positives_leaves_precision_undefined():
    m = derive_metrics(ConfusionCounts(tp=0, fp=0, fn=15051, tn=9669228))
    assert m.precision is None
    assert fmt_pct(m.precision) == NA == "N.A."
    assert m.recall == 0.0
    assert m.mcc is None
    assert m.f1 == 0.0


def test_confusion_at_edges():
    s = np.array([0.0, 0.5, 0.5, 1.0])
    y = np.array([0, 1, 0, 1])
    assert confusion_at(s, y, 0.5) == ConfusionCounts(tp=2, fp=1, fn=0, tn=1)
    assert confusion_at(s, y, 0.0) == ConfusionCounts(tp=2, fp=2, fn=0, tn=0)
    assert confusion_at(s, y, 1.01) == ConfusionCounts(tp=0, fp=0, fn=2, tn=2)
    with pytest.raises(ValidationError):
        confusion_at(s, y[:3], 0.5)
    with pytest.raises(ValidationError):
        ConfusionCounts(-1, 0, 0, 0)


def _auc_oracle(s, y):
    pos, neg = s[y == 1], s[y == 0]
    total = 0.0
    for p in pos:
        total += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return total / (pos.size * neg.size)


def _ap_oracle(s, y):
    P = y.sum()
    ap, prev_tp = 0.0, 0
    for t in sorted(set(s.tolist()), reverse=True):
        sel = s >= t
        tp = int(np.sum(sel & (y == 1)))
        fp = int(np.sum(sel & (y == 0)))
        ap += (tp - prev_tp) / P * tp / (tp + fp)
        prev_tp = tp
    return ap


def _random_instance(rng):
    n = int(rng.integers(5, 120))
    # coarse scores force ties
    s = np.round(rng.random(n), int(rng.integers(1, 4)))
    y = (rng.random(n) < rng.uniform(0.1, 0.6)).astype(int)
    y[0], y[1] = 1, 0
    return s, y


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(10)
    for _ in range(50):
        s, y = _random_instance(rng)
        curve, auc = roc_auc(s, y)
        assert auc == pytest.approx(_auc_oracle(s, y), abs=1e-12)
        assert curve.x[0] == 0.0 and curve.y[-1] == 1.0 and curve.x[-1] == 1.0
        assert np.all(np.diff(curve.x) >= 0) and np.all(np.diff(curve.y) >= 0)


def test_average_precision_matches_step_sum():
    rng = np.random.default_rng(11)
    for _ in range(50):
        s, y = _random_instance(rng)
        _, ap = pr_auc(s, y)
        assert ap == pytest.approx(_ap_oracle(s, y), abs=1e-12)


def test_auc_edge_cases():
    assert roc_auc([0.9, 0.1], [1, 0])[1] == 1.0
    assert roc_auc([0.1, 0.9], [1, 0])[1] == 0.0
    assert roc_auc([0.5, 0.5, 0.5], [1, 0, 0])[1] == 0.5
    assert auc_score([0.1, 0.2], [0, 0]) is None
    with pytest.raises(ValidationError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValidationError):
        pr_auc([0.1, 0.2], [0, 0])


def test_best_threshold_matches_exhaustive_scan():
    rng = np.random.default_rng(12)
    for _ in range(30):
        s, y = _random_instance(rng)
        for objective in ("f1", "mcc"):
            choice = best_threshold(s, y, objective)
            best = -1.0
            for t in np.unique(np.r_[s, 0.0, 1.0]):
                m = derive_metrics(confusion_at(s, y, t))
                v = getattr(m, objective)
                best = max(best, 0.0 if v is None else v)
            assert choice.value == pytest.approx(best, abs=1e-12)
            chosen = getattr(derive_metrics(confusion_at(s, y, choice.threshold)), objective) or 0.0
            assert chosen == pytest.approx(best, abs=1e-12)
    with pytest.raises(ValidationError):
        best_threshold([0.2, 0.3], [1, 0], "accuracy")


def test_threshold_agreement_reports_gap():
    rng = np.random.default_rng(13)
    s, y = _random_instance(rng)
    agree = threshold_agreement(s, y)
    assert 0.0 <= agree.relative_gap <= 1.0


def test_precision_at_k_and_ties():
    s = np.array([0.9, 0.8, 0.8, 0.1])
    y = np.array([1, 0, 1, 0])
    assert top_k_positives(s, y, 2) == 1  # stable order at the tie
    assert precision_at_k(s, y, 3) == pytest.approx(2 / 3)
    with pytest.raises(ValidationError):
        precision_at_k(s, y, 5)
    with pytest.raises(ValidationError):
        precision_at_k(s, y, 0)


def test_brier_score():
    assert brier_score([1.0, 0.0], [1, 0]) == 0.0
    assert brier_score([0.5, 0.5], [1, 0]) == 0.25


def _scored(rng, n):
    out = []
    for i in range(n):
        tags = CohortTags(
            eligible=True,
            label_hicc=bool(rng.random() < 0.2),
            predict_total=0.0,
            recurrent=bool(rng.random() < 0.3),
            age_band=(AgeBand.CHILD, AgeBand.ADULT, AgeBand.SENIOR, AgeBand.UNKNOWN)[int(rng.integers(4))],
            has_pharmacy_benefit=bool(rng.random() < 0.6),
            full_year_enrolled=bool(rng.random() < 0.7),
            gender=Gender.F if rng.random() < 0.5 else Gender.M,
        )
        out.append(ScoredMember(f"M{i:08d}", float(rng.random()), tags))
    return out


def test_stratified_report_partitions():
    rng = np.random.default_rng(14)
    scored = _scored(rng, 400)
    rows = stratified_report(scored, {"emergent": 0.76, "recurrent": 0.92})
    by = {(r.program, r.stratum): r for r in rows}
    assert by[("emergent", "overall")].n + by[("recurrent", "overall")].n == 400
    for program in ("emergent", "recurrent"):
        total = by[(program, "overall")].n
        assert by[(program, "male")].n + by[(program, "female")].n == total
        assert by[(program, "pharmacy benefit")].n + by[(program, "no pharmacy benefit")].n == total
        assert by[(program, "full eligibility")].n + by[(program, "partial eligibility")].n == total
        assert sum(by[(program, b)].n for b in ("age 0-17", "age 18-64", "age 65+")) <= total
    assert by[("recurrent", "overall")].threshold == 0.92


def test_single_class_stratum_keeps_row():
    rng = np.random.default_rng(15)
    scored = [replace(m, tags=replace(m.tags, label_hicc=False)) for m in _scored(rng, 30)]
    rows = stratified_report(scored, {"emergent": 0.5, "recurrent": 0.5})
    assert len(rows) == 20
    assert all(r.auc is None for r in rows)
    assert all(r.metrics.recall is None for r in rows)
