"""
Report writers: every table is written twice, as CSV for machines and as a
fixed-width text table rendered with rich for people. Output bytes depend only
on the inputs.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from rich import box
from rich.console import Console
from rich.table import Table

from .economics import ScenarioResult, SweepRow
from .evalkit import NA, ConfusionCounts, Curve, MetricSet, StratumRow, confusion_at, derive_metrics, fmt_num, fmt_pct
from .fairness import AuditReport

THRESHOLD_COLUMNS = ("threshold", "tp", "fp", "fn", "tn", "recall", "tnr", "precision", "npv", "f1", "mcc")
STRATIFIED_COLUMNS = ("program", "stratum", "threshold", "n", "positives", "auc", "recall", "fpr", "precision", "npv")
SAVINGS_COLUMNS = (
    "scenario", "enrollees", "precision", "program_cost", "true_hiccs", "cost_per_hicc", "total_savings", "net_savings",
)
SWEEP_COLUMNS = ("capacity", "program", "eligible", "precision", "true_hiccs")


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    counts: ConfusionCounts
    metrics: MetricSet


def _num(value: Optional[float], digits: int = 6) -> str:
    return fmt_num(value, digits)


def fmt_money(value: Optional[int]) -> str:
    if value is None:
        return NA
    sign = "-" if value < 0 else ""
    return f"{sign}${abs(value):,}"


def render_table(title: str, columns: Sequence[str], rows: Iterable[Sequence[object]], width: int = 140) -> str:
    table = Table(title=title, box=box.ASCII, title_justify="left")
    for i, c in enumerate(columns):
        table.add_column(c, justify="left" if i == 0 else "right", no_wrap=True)
    for r in rows:
        table.add_row(*[str(x) for x in r])
    buf = io.StringIO()
    console = Console(file=buf, width=width, color_system=None, force_terminal=False, no_color=True, highlight=False)
    console.print(table)
    return buf.getvalue()


def write_text(text: str, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")
    return p


def write_frame(df: pd.DataFrame, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(p, index=False, lineterminator="\n")
    return p


# ----------------------------- thresholds -----------------------------

def threshold_rows(
    scores: Sequence[float] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    thresholds: Sequence[float],
) -> List[ThresholdRow]:
    out = []
    for t in thresholds:
        counts = confusion_at(scores, labels, t)
        out.append(ThresholdRow(float(t), counts, derive_metrics(counts)))
    return out


def threshold_rows_from_counts(counts: Mapping[float, ConfusionCounts]) -> List[ThresholdRow]:
    return [ThresholdRow(float(t), c, derive_metrics(c)) for t, c in sorted(counts.items())]


def threshold_frame(rows: Sequence[ThresholdRow]) -> pd.DataFrame:
    records = []
    for r in rows:
        m, c = r.metrics, r.counts
        records.append((
            f"{r.threshold:g}", c.tp, c.fp, c.fn, c.tn,
            _num(m.recall), _num(m.tnr), _num(m.precision), _num(m.npv), _num(m.f1), _num(m.mcc),
        ))
    return pd.DataFrame(records, columns=list(THRESHOLD_COLUMNS))


def render_thresholds(rows: Sequence[ThresholdRow], title: str = "Holdout performance by threshold") -> str:
    header = ("Threshold", "TP", "FP", "FN", "TN", "Recall", "TNR", "Precision", "NPV")
    body = [
        (f"{r.threshold:g}", f"{r.counts.tp:,}", f"{r.counts.fp:,}", f"{r.counts.fn:,}", f"{r.counts.tn:,}",
         fmt_pct(r.metrics.recall), fmt_pct(r.metrics.tnr), fmt_pct(r.metrics.precision), fmt_pct(r.metrics.npv))
        for r in rows
    ]
    return render_table(title, header, body)


# ----------------------------- curves -----------------------------

def roc_frame(curve: Curve) -> pd.DataFrame:
    return pd.DataFrame({"fpr": curve.x, "tpr": curve.y, "threshold": curve.thresholds})


def pr_frame(curve: Curve) -> pd.DataFrame:
    return pd.DataFrame({"recall": curve.x, "precision": curve.y, "threshold": curve.thresholds})


# ----------------------------- strata -----------------------------

def stratified_frame(rows: Sequence[StratumRow]) -> pd.DataFrame:
    records = [
        (r.program, r.stratum, f"{r.threshold:g}", r.n, r.positives, _num(r.auc),
         _num(r.metrics.recall), _num(r.metrics.fpr), _num(r.metrics.precision), _num(r.metrics.npv))
        for r in rows
    ]
    return pd.DataFrame(records, columns=list(STRATIFIED_COLUMNS))


def render_stratified(rows: Sequence[StratumRow]) -> str:
    header = ("Stratum", "N", "AUC", "Recall", "FPR", "Precision", "NPV")
    parts = []
    for program in dict.fromkeys(r.program for r in rows):
        sub = [r for r in rows if r.program == program]
        title = f"{program.capitalize()} HiCC population (threshold {sub[0].threshold:g})"
        body = [
            (r.stratum, f"{r.n:,}", fmt_pct(r.auc, 1), fmt_pct(r.metrics.recall, 1), fmt_pct(r.metrics.fpr, 2),
             fmt_pct(r.metrics.precision, 1), fmt_pct(r.metrics.npv, 2))
            for r in sub
        ]
        parts.append(render_table(title, header, body))
    return "\n".join(parts)


# ----------------------------- economics -----------------------------

def savings_frame(results: Sequence[ScenarioResult]) -> pd.DataFrame:
    records = [
        (r.label, r.enrollees, f"{r.precision:.6f}", r.program_cost, r.true_hiccs,
         NA if r.cost_per_hicc is None else r.cost_per_hicc, r.total_savings, r.net_savings)
        for r in results
    ]
    return pd.DataFrame(records, columns=list(SAVINGS_COLUMNS))


def render_savings(results: Sequence[ScenarioResult], break_even: Optional[float] = None) -> str:
    header = ("", *(r.label for r in results))
    body = [
        ("Enrollees", *(f"{r.enrollees:,}" for r in results)),
        ("Precision", *(fmt_pct(r.precision, 1) for r in results)),
        ("Cost of intervention", *(fmt_money(r.program_cost) for r in results)),
        ("True HiCCs identified", *(f"{r.true_hiccs:,}" for r in results)),
        ("Cost per HiCC identified", *(fmt_money(r.cost_per_hicc) for r in results)),
        ("Total savings", *(fmt_money(r.total_savings) for r in results)),
        ("Net savings", *(fmt_money(r.net_savings) for r in results)),
    ]
    text = render_table("Care management program savings (first year)", header, body)
    if break_even is not None:
        text += f"break-even precision: {break_even:.4f}\n"
    return text


def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    records = [(r.capacity, r.program, r.eligible, f"{r.precision:.6f}", r.true_hiccs) for r in rows]
    return pd.DataFrame(records, columns=list(SWEEP_COLUMNS))


def render_sweep(rows: Sequence[SweepRow]) -> str:
    programs = list(dict.fromkeys(r.program for r in rows))
    header = ("Capacity", *(f"{p} precision" for p in programs), *(f"{p} true HiCCs" for p in programs))
    by_cap: Dict[int, Dict[str, SweepRow]] = {}
    for r in rows:
        by_cap.setdefault(r.capacity, {})[r.program] = r
    body = []
    for cap in sorted(by_cap):
        cells = by_cap[cap]
        body.append((
            f"{cap:,}",
            *(fmt_pct(cells[p].precision, 1) if p in cells else NA for p in programs),
            *(f"{cells[p].true_hiccs:,}" if p in cells else NA for p in programs),
        ))
    return render_table("Precision and true HiCCs by program capacity", header, body)


# ----------------------------- summaries -----------------------------

def render_summary(items: Sequence[Tuple[str, str]], title: str) -> str:
    return render_table(title, ("Measure", "Value"), items)


def render_audit(report: AuditReport) -> str:
    lo, hi = report.null_band
    items = [
        ("ZIP codes", f"{len(report.aggregates):,}"),
        ("members without a resolvable ZIP", f"{report.excluded:,}"),
        ("regression weighting", "members per ZIP" if report.weighted else "one point per ZIP"),
        ("score ~ minority: slope", f"{report.score_fit.slope:.6f}"),
        ("score ~ minority: R2", f"{report.score_fit.r_squared:.4f}"),
        ("score R2 null band (permuted minority)", f"[{lo:.4f}, {hi:.4f}] over {len(report.null_r_squared)} draws"),
        ("score R2 inside null band", "yes" if report.score_inside_null_band else "no"),
        ("cost ~ minority: slope ($ per pp)", f"{report.cost_fit.slope / 100.0:.2f}"),
        ("cost ~ minority: R2", f"{report.cost_fit.r_squared:.4f}"),
    ]
    return render_summary(items, "ZIP-level score and cost audit against minority population share")
