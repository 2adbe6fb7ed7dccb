from __future__ import annotations

from decimal import Decimal

import numpy as np
import pytest

from hicc.economics import (
    ScenarioParams,
    break_even_precision,
    capacity_sweep,
    capacity_sweep_from_precision,
    round_half_away,
    run_scenario,
)
from hicc.errors import ValidationError


def test_rule_based_program_loses_money():
    r = run_scenario(ScenarioParams(precision=0.02), label="rule-based")
    assert r.enrollees == 500
    assert r.program_cost == 5_000_000
    assert r.true_hiccs == 10
    assert r.cost_per_hicc == 500_000
    assert r.total_savings == 620_963
    assert r.net_savings == -4_379_038


def test_model_targeted_program_saves():
    r = run_scenario(ScenarioParams(precision=199 / 500), label="model")
    assert r.true_hiccs == 199
    assert r.cost_per_hicc == 25_125
    assert r.total_savings == 12_357_154
    assert r.net_savings == 7_357_154


def test_precision_from_scored_cohort():
    scores = np.linspace(1.0, 0.0, 1000)
    labels = np.zeros(1000, dtype=int)
    labels[:300:3] = 1  # 100 positives in the top 300
    r = run_scenario(ScenarioParams(capacity=300, population=1000), scores, labels)
    assert r.true_hiccs == 100
    assert r.precision == pytest.approx(1 / 3)


def test_break_even_precision():
    p = ScenarioParams()
    be = break_even_precision(p)
    assert be == pytest.approx(0.1610, abs=5e-5)
    at = run_scenario(ScenarioParams(capacity=100_000, precision=be))
    assert abs(at.net_savings) < 10_000


def test_zero_capacity_and_no_hits():
    r = run_scenario(ScenarioParams(capacity=0, precision=0.5))
    assert r.program_cost == 0 and r.true_hiccs == 0
    assert r.cost_per_hicc is None
    with pytest.raises(ValidationError):
        run_scenario(ScenarioParams())


def test_rounding_is_half_away_from_zero():
    assert round_half_away(Decimal("2.5")) == 3
    assert round_half_away(Decimal("-2.5")) == -3
    assert round_half_away(Decimal("2.4999")) == 2


@pytest.mark.parametrize(
    "kwargs",
    [{"capacity": 2_000_000}, {"reduction": 1.5}, {"precision": -0.1}, {"intervention_cost": -1.0}],
)
def test_invalid_scenarios_rejected(kwargs):
    with pytest.raises(ValidationError):
        ScenarioParams(**kwargs)


def test_capacity_sweep():
    rng = np.random.default_rng(0)
    s = rng.random(700)
    y = (rng.random(700) < s * 0.2).astype(int)
    rows = capacity_sweep({"emergent": (s, y), "recurrent": (s[:400], y[:400])}, [300, 500, 1000])
    assert [(r.capacity, r.program) for r in rows][:2] == [(300, "emergent"), (300, "recurrent")]
    clipped = [r for r in rows if r.program == "recurrent" and r.capacity >= 500]
    assert all(r.true_hiccs == int(y[:400].sum()) for r in clipped)
    for r in rows:
        assert 0.0 <= r.precision <= 1.0
    with pytest.raises(ValidationError):
        capacity_sweep({"a": (s, y)}, [500, 300])
    with pytest.raises(ValidationError):
        capacity_sweep({"a": (s, y)}, [0])


def test_sweep_from_known_precision():
    rows = capacity_sweep_from_precision({500: 0.398, 300: 0.5})
    assert [r.capacity for r in rows] == [300, 500]
    assert [r.true_hiccs for r in rows] == [150, 199]
