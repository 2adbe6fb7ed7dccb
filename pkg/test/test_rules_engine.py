from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from conftest import claim
from hicc.claims import ClaimClass, MemberRecord
from hicc.config import REPO_ROOT
from hicc.errors import ConfigError
from hicc.rules_engine import apply_rules, load_rules, member_codes, risk_points, rule_precision, rule_selection

RULES = REPO_ROOT / "rules" / "rules.yaml"


def test_bundled_rules_load():
    rules = load_rules(RULES)
    names = [r["name"] for r in rules]
    assert names[0] == "high_prior_year_cost"
    assert "renal_failure" in names


def test_cost_rules_fire_on_features():
    rules = load_rules(RULES)
    hits = apply_rules(rules, {"ALLWD_AMT_CURRENT_YEAR": 150_000.0, "EVENT_COUNT_EMERGENCY": 0.0})
    assert [h.name for h in hits] == ["high_prior_year_cost"]
    assert risk_points(hits) == 3.0

    hits = apply_rules(rules, {"ALLWD_AMT_CURRENT_YEAR": 30_000.0, "EVENT_COUNT_EMERGENCY": 4.0})
    assert {h.name for h in hits} == {"moderate_prior_year_cost", "frequent_emergency_use"}
    assert risk_points(hits) == 2.0

    # null features never satisfy a comparison
    assert apply_rules(rules, {"ALLWD_AMT_CURRENT_YEAR": None}) == []


def test_code_rules_use_reporting_period_codes(periods):
    m = MemberRecord(
        "M1",
        claims=(
            claim("M1", date(2016, 5, 1), 10.0, condition_code="N18.6"),
            claim("M1", date(2017, 6, 1), 10.0, condition_code="C50.919", procedure_code="96413"),
            claim("M1", date(2017, 7, 1), 10.0, ClaimClass.PHARMACY, drug_class="21100010"),
        ),
    )
    codes = member_codes(m, periods)
    assert codes["condition_code"] == frozenset({"C50.919"})
    assert codes["drug_class"] == frozenset({"21100010"})
    hits = apply_rules(load_rules(RULES), {}, codes)
    assert [h.name for h in hits] == ["active_malignancy"]
    assert hits[0].label == "oncology"


def test_unknown_clause_rejected(tmp_path):
    p = tmp_path / "rules.yaml"
    p.write_text("rules:\n  - name: x\n    when:\n      all:\n        - feature_between: {feature: AGE}\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="unknown clause"):
        load_rules(p)
    p.write_text("rules:\n  - name: x\n    when:\n      any:\n        - has_code: {field: zip, value: '1'}\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="field must be one of"):
        load_rules(p)


def test_rule_selection_and_precision():
    points = np.array([0.0, 3.0, 1.0, 3.0, 2.0, 0.0])
    labels = np.array([1, 1, 0, 0, 1, 1])
    assert rule_selection(points, 3).tolist() == [1, 3, 4]
    assert rule_selection(points, 10).tolist() == [1, 3, 4, 2]
    assert rule_precision(points, labels, 3) == pytest.approx(2 / 3)
    assert rule_precision(np.zeros(4), labels[:4], 3) is None


@pytest.mark.parametrize(
    "clause",
    ["has_code: N18.6", "feature_gte: 5", "feature_lte: {feature: AGE}"],
)
def test_malformed_clause_arguments_rejected(tmp_path, clause):
    p = tmp_path / "rules.yaml"
    p.write_text(f"rules:\n  - name: x\n    when:\n      all:\n        - {clause}\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="needs"):
        load_rules(p)
