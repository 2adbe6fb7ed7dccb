"""Evaluation for very rare positives: confusion counts, curves, thresholds, strata."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .claims import AgeBand, CohortTags, Gender
from .errors import ValidationError

NA = "N.A."


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("confusion counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn


@dataclass(frozen=True)
class MetricSet:
    """None marks an undefined metric (zero denominator)."""

    recall: Optional[float]
    tnr: Optional[float]
    fpr: Optional[float]
    precision: Optional[float]
    npv: Optional[float]
    f1: Optional[float]
    mcc: Optional[float]


@dataclass(frozen=True)
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    value: float


@dataclass(frozen=True)
class ThresholdAgreement:
    f1: ThresholdChoice
    mcc: ThresholdChoice

    @property
    def relative_gap(self) -> float:
        hi = max(self.f1.threshold, self.mcc.threshold)
        return 0.0 if hi == 0 else abs(self.f1.threshold - self.mcc.threshold) / hi


def _ratio(num: float, den: float) -> Optional[float]:
    return None if den == 0 else num / den


def fmt_pct(value: Optional[float], digits: int = 2) -> str:
    return NA if value is None else f"{100.0 * value:.{digits}f}%"


def fmt_num(value: Optional[float], digits: int = 4) -> str:
    return NA if value is None else f"{value:.{digits}f}"


def _arrays(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError(f"scores and labels differ in length ({s.shape} vs {y.shape})")
    return s, y


# ----------------------------- counts and metrics -----------------------------

def confusion_at(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray, threshold: float) -> ConfusionCounts:
    s, y = _arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    return ConfusionCounts(tp, fp, fn, int(s.size) - tp - fp - fn)


def _mcc(tp: float, fp: float, fn: float, tn: float) -> Optional[float]:
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return None
    return (tp * tn - fp * fn) / math.sqrt(den)


def derive_metrics(counts: ConfusionCounts) -> MetricSet:
    tp, fp, fn, tn = (float(x) for x in (counts.tp, counts.fp, counts.fn, counts.tn))
    tnr = _ratio(tn, tn + fp)
    return MetricSet(
        recall=_ratio(tp, tp + fn),
        tnr=tnr,
        fpr=None if tnr is None else fp / (tn + fp),
        precision=_ratio(tp, tp + fp),
        npv=_ratio(tn, tn + fn),
        f1=_ratio(2.0 * tp, 2.0 * tp + fp + fn),
        mcc=_mcc(tp, fp, fn, tn),
    )


# ----------------------------- curves -----------------------------

def _ranked_groups(s: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per distinct score, descending: (threshold, positives, negatives) in the tie group."""
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    ends = np.flatnonzero(np.r_[ss[1:] != ss[:-1], True])
    tp_cum = np.cumsum(yy, dtype=np.int64)[ends]
    fp_cum = (ends + 1) - tp_cum
    tp_g = np.diff(np.r_[0, tp_cum])
    fp_g = np.diff(np.r_[0, fp_cum])
    return ss[ends], tp_g, fp_g


def roc_auc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> Tuple[Curve, float]:
    """Exact AUC: P(score+ > score-) + 1/2 P(tie)."""
    s, y = _arrays(scores, labels)
    P = int(y.sum())
    N = int(y.size - P)
    if P == 0 or N == 0:
        raise ValidationError("roc_auc needs both classes")
    thresholds, tp_g, fp_g = _ranked_groups(s, y)
    tp_prev = np.r_[0, np.cumsum(tp_g)[:-1]]
    concordant_x2 = int(np.sum(fp_g * (2 * tp_prev + tp_g)))
    auc = concordant_x2 / (2.0 * P * N)
    tpr = np.r_[0.0, np.cumsum(tp_g) / P]
    fpr = np.r_[0.0, np.cumsum(fp_g) / N]
    return Curve(fpr, tpr, np.r_[np.inf, thresholds]), auc


def auc_score(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> Optional[float]:
    """AUC-ROC, or None when only one class is present."""
    y = np.asarray(labels).astype(bool)
    if y.all() or not y.any():
        return None
    return roc_auc(scores, labels)[1]


def pr_auc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> Tuple[Curve, float]:
    """Average precision: step integration in recall, no interpolation."""
    s, y = _arrays(scores, labels)
    P = int(y.sum())
    if P == 0:
        raise ValidationError("pr_auc needs at least one positive")
    thresholds, tp_g, fp_g = _ranked_groups(s, y)
    tp = np.cumsum(tp_g)
    fp = np.cumsum(fp_g)
    precision = tp / (tp + fp)
    recall = tp / P
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return Curve(recall, precision, thresholds), ap


def precision_at_k(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray, k: int) -> float:
    return top_k_positives(scores, labels, k) / k


def top_k_positives(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray, k: int) -> int:
    s, y = _arrays(scores, labels)
    if k <= 0:
        raise ValidationError("k must be positive")
    if k > s.size:
        raise ValidationError(f"k={k} exceeds population {s.size}")
    order = np.argsort(-s, kind="stable")  # ties at the cut keep input order
    return int(y[order[:k]].sum())


# ----------------------------- thresholds -----------------------------

def _threshold_scan(s: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    cands = np.unique(np.r_[s, 0.0, 1.0])
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    tp = (pos.size - np.searchsorted(pos, cands, side="left")).astype(float)
    fp = (neg.size - np.searchsorted(neg, cands, side="left")).astype(float)
    fn = pos.size - tp
    tn = neg.size - fp
    return cands, tp, fp, fn, tn


def best_threshold(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray, objective: str = "f1") -> ThresholdChoice:
    s, y = _arrays(scores, labels)
    if y.all() or not y.any():
        raise ValidationError("best_threshold needs both classes")
    cands, tp, fp, fn, tn = _threshold_scan(s, y)
    objective = objective.lower()
    with np.errstate(divide="ignore", invalid="ignore"):
        if objective == "f1":
            value = 2.0 * tp / (2.0 * tp + fp + fn)
        elif objective == "mcc":
            den = np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
            value = np.where(den > 0, (tp * tn - fp * fn) / den, 0.0)
        else:
            raise ValidationError(f"unknown objective {objective!r}; use f1 or mcc")
    value = np.nan_to_num(value, nan=0.0)
    best = value.max()
    i = int(np.flatnonzero(value == best)[-1])  # highest threshold among ties
    return ThresholdChoice(float(cands[i]), float(value[i]))


def threshold_agreement(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> ThresholdAgreement:
    return ThresholdAgreement(best_threshold(scores, labels, "f1"), best_threshold(scores, labels, "mcc"))


def brier_score(probabilities: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    p, y = _arrays(probabilities, labels)
    return float(np.mean((p - y.astype(float)) ** 2))


# ----------------------------- stratified report -----------------------------

@dataclass(frozen=True)
class ScoredMember:
    member_id: str
    score: float
    tags: CohortTags


@dataclass(frozen=True)
class StratumRow:
    program: str
    stratum: str
    threshold: float
    n: int
    positives: int
    auc: Optional[float]
    metrics: MetricSet


STRATA: Tuple[Tuple[str, object], ...] = (
    ("overall", lambda t: True),
    ("male", lambda t: t.gender is Gender.M),
    ("female", lambda t: t.gender is Gender.F),
    ("age 0-17", lambda t: t.age_band is AgeBand.CHILD),
    ("age 18-64", lambda t: t.age_band is AgeBand.ADULT),
    ("age 65+", lambda t: t.age_band is AgeBand.SENIOR),
    ("pharmacy benefit", lambda t: t.has_pharmacy_benefit),
    ("no pharmacy benefit", lambda t: not t.has_pharmacy_benefit),
    ("full eligibility", lambda t: t.full_year_enrolled),
    ("partial eligibility", lambda t: not t.full_year_enrolled),
)

PROGRAMS = ("emergent", "recurrent")


def program_members(scored: Iterable[ScoredMember], program: str) -> List[ScoredMember]:
    want_recurrent = program == "recurrent"
    return [m for m in scored if m.tags.recurrent == want_recurrent]


def stratum_row(members: Sequence[ScoredMember], program: str, stratum: str, threshold: float) -> StratumRow:
    s = np.array([m.score for m in members], dtype=float)
    y = np.array([m.tags.label_hicc for m in members], dtype=bool)
    counts = confusion_at(s, y, threshold)
    return StratumRow(
        program=program,
        stratum=stratum,
        threshold=threshold,
        n=len(members),
        positives=int(y.sum()),
        auc=auc_score(s, y),
        metrics=derive_metrics(counts),
    )


def stratified_report(
    scored: Sequence[ScoredMember],
    thresholds: Dict[str, float],
    strata: Sequence[Tuple[str, object]] = STRATA,
) -> List[StratumRow]:
    """Rows for each program x stratum; single-class strata keep their row with AUC undefined."""
    rows: List[StratumRow] = []
    for program in PROGRAMS:
        pool = program_members(scored, program)
        for name, pred in strata:
            subset = [m for m in pool if pred(m.tags)]  # type: ignore[operator]
            rows.append(stratum_row(subset, program, name, thresholds[program]))
    return rows
