"""
Per-member feature computation over the reporting period.

Every family reads only claims dated on or before report_end; the prediction
period is never visible here. Nulls are None in a FeatureVector and NaN in a
FeatureMatrix.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed

from .catalog import FeatureCatalog, FeatureDef, LifeTable
from .claims import ClaimClass, ClaimLine, Gender, MemberRecord, PeriodPair, SdohTable
from .errors import SchemaMismatchError

logger = logging.getLogger(__name__)

MIN_COVERED_DAYS = 30

Values = Dict[str, Optional[float]]


@dataclass(frozen=True)
class FeatureVector:
    member_id: str
    values: Dict[str, Optional[float]]
    schema_version: str

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.values)

    def as_array(self) -> np.ndarray:
        return np.array([np.nan if v is None else v for v in self.values.values()], dtype=float)


@dataclass(frozen=True)
class FeatureMatrix:
    member_ids: Tuple[str, ...]
    names: Tuple[str, ...]
    values: np.ndarray
    schema_version: str

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.member_ids), len(self.names)):
            raise SchemaMismatchError(
                f"matrix shape {self.values.shape} does not match {len(self.member_ids)} rows x {len(self.names)} names"
            )

    def __len__(self) -> int:
        return len(self.member_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def take(self, rows: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(rows, dtype=int)
        return FeatureMatrix(tuple(self.member_ids[i] for i in idx), self.names, self.values[idx], self.schema_version)

    def select(self, names: Sequence[str], schema_version: Optional[str] = None) -> "FeatureMatrix":
        missing = [n for n in names if n not in self.names]
        if missing:
            raise SchemaMismatchError(f"feature matrix lacks columns {missing}")
        cols = [self.names.index(n) for n in names]
        return FeatureMatrix(self.member_ids, tuple(names), self.values[:, cols], schema_version or self.schema_version)

    def row(self, i: int) -> FeatureVector:
        vals = {n: (None if np.isnan(v) else float(v)) for n, v in zip(self.names, self.values[i])}
        return FeatureVector(self.member_ids[i], vals, self.schema_version)

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], names: Sequence[str], schema_version: str) -> "FeatureMatrix":
        values = np.empty((len(vectors), len(names)), dtype=float)
        for i, v in enumerate(vectors):
            if v.schema_version != schema_version:
                raise SchemaMismatchError(f"vector {v.member_id} has schema {v.schema_version}, expected {schema_version}")
            values[i] = v.as_array()
        return cls(tuple(v.member_id for v in vectors), tuple(names), values, schema_version)


# ----------------------------- window helpers -----------------------------

def _in(c: ClaimLine, a: date, b: date) -> bool:
    return a <= c.service_date <= b


def window_sum(claims: Iterable[ClaimLine], a: date, b: date) -> float:
    return math.fsum(c.allowed_amount for c in claims if _in(c, a, b))


def annualize(total: float, covered_days: int) -> Optional[float]:
    if covered_days < MIN_COVERED_DAYS:
        return None
    return total * 365.0 / covered_days


def ramp_weight(t: date, a: date, b: date) -> float:
    span = (b - a).days
    if span == 0:
        return 1.0
    return (t.toordinal() - a.toordinal()) / span


def wavelet_pair(claims: Iterable[ClaimLine], a: date, b: date) -> Tuple[float, float]:
    """(rising, falling) ramp-weighted sums over [a, b]."""
    rising: List[float] = []
    falling: List[float] = []
    for c in claims:
        if _in(c, a, b):
            w = ramp_weight(c.service_date, a, b)
            rising.append(w * c.allowed_amount)
            falling.append((1.0 - w) * c.allowed_amount)
    return math.fsum(rising), math.fsum(falling)


def predict_12mo_submodel(quarterly_totals: Sequence[Optional[float]]) -> float:
    """Least-squares line through quarters 1..4, summed over quarters 5..8, floored at 0."""
    if len(quarterly_totals) != 4:
        raise ValueError("expected four quarterly totals")
    y = [0.0 if q is None else float(q) for q in quarterly_totals]
    y_mean = math.fsum(y) / 4.0
    slope = math.fsum((x - 2.5) * (v - y_mean) for x, v in zip((1, 2, 3, 4), y)) / 5.0
    # sum_{q=5..8} (y_mean + slope * (q - 2.5)) = 4 * y_mean + 16 * slope
    return max(0.0, 4.0 * y_mean + 16.0 * slope)


@dataclass(frozen=True)
class _View:
    """Claims visible to featurization, split once per member."""

    member: MemberRecord
    history: Tuple[ClaimLine, ...]
    report: Tuple[ClaimLine, ...]

    @classmethod
    def of(cls, member: MemberRecord, periods: PeriodPair) -> "_View":
        history = tuple(c for c in member.claims if c.service_date <= periods.report_end)
        report = tuple(c for c in history if c.service_date >= periods.report_start)
        return cls(member, history, report)


def _quarters(view: _View, periods: PeriodPair) -> List[float]:
    return [window_sum(view.report, *periods.window(3 * k, 3)) for k in range(4)]


# ----------------------------- families -----------------------------

def personal_features(member: MemberRecord) -> Values:
    male = None if member.gender is None else float(member.gender is Gender.M)
    return {"GENDER_MALE": male}


def enrollment_features(member: MemberRecord, periods: PeriodPair) -> Values:
    rs, re_ = periods.report_start, periods.report_end
    covered = member.covered_days(rs, re_)
    return {
        "COVERED_DAYS_12MO": float(covered),
        "PHARMACY_COVERED_DAYS_12MO": float(member.covered_days(rs, re_, pharmacy_only=True)),
        "FULL_YEAR_ENROLLED": float(covered >= periods.report_days),
    }


def cost_windows(member: MemberRecord, periods: PeriodPair, view: Optional[_View] = None) -> Values:
    v = view or _View.of(member, periods)
    rs, re_ = periods.report_start, periods.report_end
    prior_a, prior_b = periods.months_back(12), rs - timedelta(days=1)
    prior2_a, prior2_b = periods.months_back(24), periods.months_back(12) - timedelta(days=1)

    current = math.fsum(c.allowed_amount for c in v.report)
    prior = window_sum(v.history, prior_a, prior_b)
    prior2 = window_sum(v.history, prior2_a, prior2_b)
    quarters = _quarters(v, periods)
    last = max((c.service_date for c in v.history), default=None)

    out: Values = {
        "ALLWD_AMT_CURRENT_YEAR": current,
        "ANNUAL_ALLWD_AMT_CURRENT_YEAR": annualize(current, member.covered_days(rs, re_)),
        "ALLWD_AMT_PRIOR_YEAR": prior,
        "ANNUAL_ALLWD_AMT_PRIOR_YEAR": annualize(prior, member.covered_days(prior_a, prior_b)),
        "ANNUAL_ALLWD_AMT_2_YEARS_PRIOR": annualize(prior2, member.covered_days(prior2_a, prior2_b)),
        "TOTAL_3_YEAR_ALLWD_AMT": window_sum(v.history, prior2_a, re_),
        "INPATIENT_DAYS_12MO": float(sum(c.inpatient_days or 0 for c in v.report)),
        "DAYS_SINCE_LAST_CLAIM": None if last is None else float((re_ - last).days),
        "PHARMACY_ALLWD_AMT_12MO": math.fsum(
            c.allowed_amount for c in v.report if c.claim_class is ClaimClass.PHARMACY
        ),
    }
    for k, q in enumerate(quarters, start=1):
        out[f"ALLWD_AMT_Q{k}"] = q
    return out


def trend_features(member: MemberRecord, periods: PeriodPair, view: Optional[_View] = None) -> Values:
    v = view or _View.of(member, periods)
    current = math.fsum(c.allowed_amount for c in v.report)
    prior = window_sum(v.history, periods.months_back(12), periods.report_start - timedelta(days=1))
    first_half = window_sum(v.report, *periods.window(0, 6))
    second_half = window_sum(v.report, *periods.window(6, 6))
    q3 = window_sum(v.report, *periods.window(6, 3))
    q4 = window_sum(v.report, *periods.window(9, 3))
    return {
        "ALLWD_AMT_CHANGE_12MO": current - prior,
        "ALLWD_AMT_CHANGE_6MO": second_half - first_half,
        "ALLWD_AMT_CHANGE_3MO": q4 - q3,
    }


def wavelet_trends(member: MemberRecord, periods: PeriodPair, view: Optional[_View] = None) -> Values:
    v = view or _View.of(member, periods)
    rising, falling = wavelet_pair(v.report, periods.report_start, periods.report_end)
    half_rising, _ = wavelet_pair(v.report, *periods.window(6, 6))
    q4_a, q4_b = periods.window(9, 3)
    q4_rising, _ = wavelet_pair(v.report, q4_a, q4_b)
    return {
        "ALLWD_AMT_RISING_WV": rising,
        "ALLWD_AMT_FALLING_WV": falling,
        "ALLWD_AMT_SECOND_6MO_RISING_WV": half_rising,
        "ALLWD_AMT_FOURTH_3MO_RISING_WV": q4_rising,
        "ALLWD_AMT_FOURTH_3MO_WV": window_sum(v.report, q4_a, q4_b),
    }


def submodel_features(member: MemberRecord, periods: PeriodPair, view: Optional[_View] = None) -> Values:
    v = view or _View.of(member, periods)
    return {"PREDICTED_12MO_ALLWD_AMT": predict_12mo_submodel(_quarters(v, periods))}


def clinical_events(
    member: MemberRecord, periods: PeriodPair, catalog: FeatureCatalog, view: Optional[_View] = None
) -> Values:
    v = view or _View.of(member, periods)
    triggers = catalog.code_lists["trigger_conditions"]
    cancer = catalog.code_lists["cancer_trigger"]
    last_cancer = max((c.service_date for c in v.history if c.condition_code in cancer), default=None)
    return {
        "EVENT_COUNT_EMERGENCY": float(sum(1 for c in v.report if c.claim_class is ClaimClass.EMERGENCY)),
        "EVENT_COUNT_AMBULATORY": float(sum(1 for c in v.report if c.claim_class is ClaimClass.AMBULATORY)),
        "EVENT_COUNT_INPATIENT": float(sum(1 for c in v.report if c.claim_class is ClaimClass.INPATIENT)),
        "TRG_TOTAL_ALLWD_AMT": math.fsum(c.allowed_amount for c in v.report if c.condition_code in triggers),
        "TRG_DAYS_MALIGNANCY": None if last_cancer is None else float((periods.report_end - last_cancer).days),
    }


def actuarial(
    member: MemberRecord, life_table: LifeTable, periods: PeriodPair, view: Optional[_View] = None
) -> Values:
    v = view or _View.of(member, periods)
    age = member.age_at(periods.report_end)
    out: Values = {
        "AGE": None if age is None else float(age),
        "OPTIMAL_LIFE_EXPECTANCY": None,
        "YLL_CURRENT_YR": None,
        "MORTALITY_RISK": None,
    }
    if age is None or member.gender is None:
        return out
    expectancy = life_table.lookup(age, member.gender)
    codes = sorted({c.condition_code for c in v.report if c.condition_code})
    lost = math.fsum(life_table.years_lost.get(code, 0.0) for code in codes)
    yll = min(expectancy, lost)
    out.update(
        OPTIMAL_LIFE_EXPECTANCY=expectancy,
        YLL_CURRENT_YR=yll,
        MORTALITY_RISK=yll / expectancy,
    )
    return out


def category_cost(feature: FeatureDef, claims: Iterable[ClaimLine]) -> float:
    field = feature.params["field"]
    if field == "drug_class":
        prefixes = tuple(feature.params["prefixes"])
        return math.fsum(c.allowed_amount for c in claims if c.drug_class and c.drug_class.startswith(prefixes))
    codes = frozenset(feature.params["codes"])
    return math.fsum(c.allowed_amount for c in claims if getattr(c, field) in codes)


def category_costs(
    member: MemberRecord, periods: PeriodPair, catalog: FeatureCatalog, view: Optional[_View] = None
) -> Values:
    v = view or _View.of(member, periods)
    return {f.name: category_cost(f, v.report) for f in catalog.by_family("category")}


def sdoh_join(member: MemberRecord, sdoh_table: SdohTable, catalog: FeatureCatalog) -> Values:
    record = sdoh_table.get(member.zip)
    out: Values = {}
    for f in catalog.by_family("sdoh"):
        value = None if record is None else record.indicators.get(f.params["indicator"])
        out[f.name] = None if value is None or not math.isfinite(value) else float(value)
    return out


# ----------------------------- orchestration -----------------------------

class FeatureBuilder:
    """Binds the catalog and reference tables; featurizes members in catalog order."""

    def __init__(self, catalog: FeatureCatalog, life_table: LifeTable, sdoh_table: SdohTable, periods: PeriodPair):
        self.catalog = catalog
        self.life_table = life_table
        self.sdoh_table = sdoh_table
        self.periods = periods
        self._families = catalog.families()

    @property
    def names(self) -> Tuple[str, ...]:
        return self.catalog.names

    def values(self, member: MemberRecord) -> Values:
        p = self.periods
        view = _View.of(member, p)
        fam = self._families
        merged: Values = {}
        if "personal" in fam:
            merged.update(personal_features(member))
        if "enrollment" in fam:
            merged.update(enrollment_features(member, p))
        if "cost" in fam:
            merged.update(cost_windows(member, p, view))
        if "trend" in fam:
            merged.update(trend_features(member, p, view))
        if "wavelet" in fam:
            merged.update(wavelet_trends(member, p, view))
        if "submodel" in fam:
            merged.update(submodel_features(member, p, view))
        if "events" in fam:
            merged.update(clinical_events(member, p, self.catalog, view))
        if "actuarial" in fam:
            merged.update(actuarial(member, self.life_table, p, view))
        if "category" in fam:
            merged.update(category_costs(member, p, self.catalog, view))
        if "sdoh" in fam:
            merged.update(sdoh_join(member, self.sdoh_table, self.catalog))
        out: Values = {}
        for name in self.catalog.names:
            value = merged[name]
            out[name] = None if value is None or not math.isfinite(value) else float(value)
        return out

    def vector(self, member: MemberRecord) -> FeatureVector:
        return FeatureVector(member.member_id, self.values(member), self.catalog.schema_version)

    def _block(self, members: Sequence[MemberRecord]) -> np.ndarray:
        out = np.empty((len(members), len(self.catalog)), dtype=float)
        for i, m in enumerate(members):
            out[i] = [np.nan if v is None else v for v in self.values(m).values()]
        return out

    def matrix(self, members: Sequence[MemberRecord], workers: int = 1) -> FeatureMatrix:
        members = list(members)
        k = len(self.catalog)
        if not members:
            return FeatureMatrix((), self.names, np.empty((0, k)), self.catalog.schema_version)
        if workers <= 1:
            values = self._block(members)
        else:
            n_chunks = min(len(members), 4 * workers)
            bounds = np.linspace(0, len(members), n_chunks + 1).astype(int)
            blocks = Parallel(n_jobs=workers)(
                delayed(self._block)(members[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a
            )
            values = np.vstack(blocks)
        logger.info("[OK] featurized members=%d features=%d", len(members), k)
        return FeatureMatrix(tuple(m.member_id for m in members), self.names, values, self.catalog.schema_version)


def featurize(
    member: MemberRecord,
    catalog: FeatureCatalog,
    life_table: LifeTable,
    sdoh_table: SdohTable,
    periods: PeriodPair,
) -> FeatureVector:
    return FeatureBuilder(catalog, life_table, sdoh_table, periods).vector(member)


# ----------------------------- matrix files -----------------------------

def schema_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".schema.yaml")


def write_matrix(matrix: FeatureMatrix, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(matrix.values, columns=list(matrix.names))
    df.insert(0, "member_id", list(matrix.member_ids))
    df.to_csv(p, index=False, na_rep="", lineterminator="\n")
    sidecar = {"schema_version": matrix.schema_version, "rows": len(matrix), "names": list(matrix.names)}
    schema_path(p).write_text(yaml.safe_dump(sidecar, sort_keys=False), encoding="utf-8")
    return p


def read_matrix(path: str | Path, expected_schema: Optional[str] = None) -> FeatureMatrix:
    p = Path(path)
    sp = schema_path(p)
    if not sp.exists():
        raise SchemaMismatchError(f"feature matrix {p} has no schema sidecar {sp.name}")
    meta = yaml.safe_load(sp.read_text(encoding="utf-8")) or {}
    version = str(meta.get("schema_version", ""))
    if expected_schema is not None and version != expected_schema:
        raise SchemaMismatchError(f"feature schema {version} does not match model schema {expected_schema}")
    df = pd.read_csv(p, dtype={"member_id": str}, keep_default_na=False, na_values=[""])
    names = [c for c in df.columns if c != "member_id"]
    if names != list(meta.get("names", [])):
        raise SchemaMismatchError(f"header of {p} does not match its schema sidecar")
    values = df[names].to_numpy(dtype=float) if names else np.empty((len(df), 0))
    return FeatureMatrix(tuple(df["member_id"].tolist()), tuple(names), values, version)
