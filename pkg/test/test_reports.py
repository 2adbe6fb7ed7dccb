from __future__ import annotations

from hicc.economics import ScenarioParams, break_even_precision, run_scenario
from hicc.evalkit import ConfusionCounts
from hicc.reports import (
    THRESHOLD_COLUMNS,
    fmt_money,
    render_savings,
    render_thresholds,
    savings_frame,
    threshold_frame,
    threshold_rows,
    threshold_rows_from_counts,
)


def _rows():
    return threshold_rows_from_counts({
        0.76: ConfusionCounts(6553, 28102, 8498, 9641126),
        1.0: ConfusionCounts(0, 0, 15051, 9669228),
    })


def test_threshold_table_text():
    text = render_thresholds(_rows())
    assert "Threshold" in text
    body = text
    assert "43.54%" in body and "18.91%" in body and "99.71%" in body and "99.91%" in body
    assert "6,553" in body and "9,641,126" in body
    assert "N.A." in body
    # plain ASCII box, no color codes
    assert "\x1b[" not in text
    assert text == render_thresholds(_rows())


def test_threshold_frame_values():
    df = threshold_frame(_rows())
    assert list(df.columns) == list(THRESHOLD_COLUMNS)
    assert df.loc[0, "threshold"] == "0.76"
    assert df.loc[0, "recall"] == "0.435386"
    assert df.loc[1, "precision"] == "N.A."
    assert df.loc[1, "tp"] == 0


def test_threshold_rows_from_scores():
    rows = threshold_rows([0.9, 0.8, 0.2, 0.1], [1, 0, 1, 0], [0.5, 1.0])
    assert rows[0].counts == ConfusionCounts(1, 1, 1, 1)
    assert rows[1].metrics.precision is None


def test_money_formatting():
    assert fmt_money(-4_379_038) == "-$4,379,038"
    assert fmt_money(620_963) == "$620,963"
    assert fmt_money(None) == "N.A."


def test_savings_table():
    params = ScenarioParams()
    results = [
        run_scenario(ScenarioParams(precision=0.02), label="Rule-based"),
        run_scenario(ScenarioParams(precision=0.398), label="ML model"),
    ]
    text = render_savings(results, break_even_precision(params))
    assert "-$4,379,038" in text
    assert "$12,357,154" in text
    assert "$25,125" in text
    assert "break-even precision: 0.1610" in text
    df = savings_frame(results)
    assert df["net_savings"].tolist() == [-4_379_038, 7_357_154]
