from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta

from .codes import normalize_code_series
from .errors import IngestError, ValidationError

logger = logging.getLogger(__name__)

HICC_THRESHOLD = 250_000.0

CLAIMS_COLUMNS = (
    "member_id",
    "service_date",
    "claim_class",
    "allowed_amount",
    "condition_code",
    "procedure_code",
    "drug_class",
    "inpatient_days",
)
ENROLLMENT_COLUMNS = ("member_id", "start_date", "end_date", "has_medical", "has_pharmacy")
MEMBERS_COLUMNS = ("member_id", "birth_date", "gender", "zip", "industry")


class ClaimClass(str, Enum):
    INPATIENT = "inpatient"
    OUTPATIENT = "outpatient"
    PROFESSIONAL = "professional"
    EMERGENCY = "emergency"
    AMBULATORY = "ambulatory"
    PHARMACY = "pharmacy"


class Gender(str, Enum):
    F = "F"
    M = "M"


class AgeBand(str, Enum):
    CHILD = "0-17"
    ADULT = "18-64"
    SENIOR = "65+"
    UNKNOWN = "unknown"


@dataclass(frozen=True, slots=True)
class ClaimLine:
    member_id: str
    service_date: date
    claim_class: ClaimClass
    allowed_amount: float
    condition_code: Optional[str] = None
    procedure_code: Optional[str] = None
    drug_class: Optional[str] = None
    inpatient_days: Optional[int] = None

    def __post_init__(self) -> None:
        if self.inpatient_days is not None:
            if self.claim_class is not ClaimClass.INPATIENT:
                raise ValidationError(f"inpatient_days on a {self.claim_class.value} claim ({self.member_id})")
            if self.inpatient_days < 0:
                raise ValidationError(f"negative inpatient_days ({self.member_id})")
        if self.drug_class is not None and self.claim_class is not ClaimClass.PHARMACY:
            raise ValidationError(f"drug_class on a {self.claim_class.value} claim ({self.member_id})")

    def sort_key(self) -> tuple:
        # canonical order, independent of input row order
        return (
            self.service_date,
            self.claim_class.value,
            self.allowed_amount,
            self.condition_code or "",
            self.procedure_code or "",
            self.drug_class or "",
            -1 if self.inpatient_days is None else self.inpatient_days,
        )


@dataclass(frozen=True, slots=True)
class EnrollmentSpan:
    member_id: str
    start_date: date
    end_date: date
    has_medical: bool = True
    has_pharmacy: bool = False

    def __post_init__(self) -> None:
        if self.start_date > self.end_date:
            raise ValidationError(f"enrollment span starts after it ends ({self.member_id})")

    def covers(self, d: date) -> bool:
        return self.start_date <= d <= self.end_date

    def overlap_days(self, start: date, end: date) -> int:
        lo = max(self.start_date, start)
        hi = min(self.end_date, end)
        return max(0, (hi - lo).days + 1)


@dataclass(frozen=True)
class SdohRecord:
    zip: str
    indicators: Mapping[str, Optional[float]]

    @property
    def minority_fraction(self) -> float:
        return float(self.indicators["minority_fraction"])  # type: ignore[arg-type]


class SdohTable:
    def __init__(self, indicator_names: Sequence[str], records: Iterable[SdohRecord] = ()):
        self.indicator_names: Tuple[str, ...] = tuple(indicator_names)
        self._records: Dict[str, SdohRecord] = {}
        for r in records:
            if r.zip in self._records:
                raise ValidationError(f"duplicate zip {r.zip} in SDOH table")
            mf = r.indicators.get("minority_fraction")
            if mf is None or not (0.0 <= float(mf) <= 1.0):
                raise ValidationError(f"minority_fraction outside [0,1] for zip {r.zip}")
            self._records[r.zip] = r

    def get(self, zip_code: Optional[str]) -> Optional[SdohRecord]:
        if not zip_code:
            return None
        return self._records.get(zip_code)

    def __contains__(self, zip_code: object) -> bool:
        return zip_code in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SdohRecord]:
        for z in sorted(self._records):
            yield self._records[z]


@dataclass(frozen=True)
class MemberRecord:
    member_id: str
    birth_date: Optional[date] = None
    gender: Optional[Gender] = None
    zip: Optional[str] = None
    industry: Optional[str] = None
    claims: Tuple[ClaimLine, ...] = ()
    spans: Tuple[EnrollmentSpan, ...] = ()

    def age_at(self, d: date) -> Optional[int]:
        if self.birth_date is None:
            return None
        b = self.birth_date
        age = d.year - b.year - ((d.month, d.day) < (b.month, b.day))
        return max(0, age)

    def covered(self, d: date) -> bool:
        return any(s.covers(d) for s in self.spans)

    def covered_days(self, start: date, end: date, pharmacy_only: bool = False) -> int:
        return sum(
            s.overlap_days(start, end)
            for s in self.spans
            if s.has_pharmacy or not pharmacy_only
        )

    def earliest_date(self) -> Optional[date]:
        candidates = [s.start_date for s in self.spans]
        if self.claims:
            candidates.append(self.claims[0].service_date)
        return min(candidates) if candidates else None


@dataclass(frozen=True)
class PeriodPair:
    report_start: date
    report_end: date
    predict_start: date
    predict_end: date

    def __post_init__(self) -> None:
        if self.report_start + relativedelta(months=12) - timedelta(days=1) != self.report_end:
            raise ValidationError(f"report period {self.report_start}..{self.report_end} is not 12 calendar months")
        if self.predict_start != self.report_end + timedelta(days=1):
            raise ValidationError("prediction period must start the day after the report period ends")
        if self.predict_start + relativedelta(months=12) - timedelta(days=1) != self.predict_end:
            raise ValidationError(f"prediction period {self.predict_start}..{self.predict_end} is not 12 calendar months")

    @classmethod
    def from_report(cls, report_start: date, report_end: Optional[date] = None) -> "PeriodPair":
        if report_end is None:
            report_end = report_start + relativedelta(months=12) - timedelta(days=1)
        predict_start = report_end + timedelta(days=1)
        predict_end = predict_start + relativedelta(months=12) - timedelta(days=1)
        return cls(report_start, report_end, predict_start, predict_end)

    @property
    def report_days(self) -> int:
        return (self.report_end - self.report_start).days + 1

    @property
    def last_report_month_start(self) -> date:
        return self.report_end.replace(day=1)

    @property
    def first_predict_month_end(self) -> date:
        return self.predict_start + relativedelta(months=1) - timedelta(days=1)

    def months_back(self, months: int) -> date:
        return self.report_start - relativedelta(months=months)

    def window(self, start_offset_months: int, length_months: int) -> Tuple[date, date]:
        """Inclusive window starting `start_offset_months` after report_start."""
        a = self.report_start + relativedelta(months=start_offset_months)
        b = a + relativedelta(months=length_months) - timedelta(days=1)
        return a, b


@dataclass(frozen=True)
class CohortTags:
    eligible: bool
    label_hicc: bool
    predict_total: float
    recurrent: bool
    age_band: AgeBand = AgeBand.UNKNOWN
    has_pharmacy_benefit: bool = False
    full_year_enrolled: bool = False
    gender: Optional[Gender] = None


@dataclass(frozen=True)
class IngestSummary:
    claim_rows: int
    enrollment_rows: int
    member_rows: int
    sdoh_rows: int
    members: int
    total_allowed: float


class MemberStore:
    """Immutable-after-ingest map of member_id -> MemberRecord, iterated in id order."""

    def __init__(self, members: Iterable[MemberRecord], summary: Optional[IngestSummary] = None):
        self._members: Dict[str, MemberRecord] = {m.member_id: m for m in members}
        self._order = sorted(self._members)
        self.summary = summary

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[MemberRecord]:
        for mid in self._order:
            yield self._members[mid]

    def __getitem__(self, member_id: str) -> MemberRecord:
        return self._members[member_id]

    def __contains__(self, member_id: object) -> bool:
        return member_id in self._members

    def get(self, member_id: str) -> Optional[MemberRecord]:
        return self._members.get(member_id)

    def total_allowed(self) -> float:
        return math.fsum(c.allowed_amount for m in self for c in m.claims)


# ----------------------------- ingest -----------------------------

def _read_csv(path: str | Path, required: Sequence[str]) -> pd.DataFrame:
    p = Path(path)
    if not p.exists():
        raise IngestError("file not found", p)
    df = pd.read_csv(p, dtype=str, keep_default_na=False, na_filter=False)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise IngestError(f"missing columns {missing}", p, 1)
    for c in df.columns:
        df[c] = df[c].str.strip()
    return df


def _line_of(mask: np.ndarray) -> int:
    # header is line 1
    return int(np.flatnonzero(mask)[0]) + 2


def _parse_dates(df: pd.DataFrame, col: str, path: str | Path, allow_empty: bool = False) -> List[Optional[date]]:
    raw = df[col]
    parsed = pd.to_datetime(raw, format="%Y-%m-%d", errors="coerce")
    bad = parsed.isna().to_numpy()
    if allow_empty:
        bad &= (raw != "").to_numpy()
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"malformed {col} {raw.iat[line - 2]!r}", path, line)
    return [None if pd.isna(ts) else ts.date() for ts in parsed]


def _parse_bool01(df: pd.DataFrame, col: str, path: str | Path) -> List[bool]:
    raw = df[col]
    bad = ~raw.isin(["0", "1"]).to_numpy()
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"{col} must be 0 or 1, got {raw.iat[line - 2]!r}", path, line)
    return (raw == "1").tolist()


def _parse_float(df: pd.DataFrame, col: str, path: str | Path, allow_empty: bool = False) -> np.ndarray:
    raw = df[col]
    vals = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(vals)
    if allow_empty:
        bad &= (raw != "").to_numpy()
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"malformed {col} {raw.iat[line - 2]!r}", path, line)
    return vals


def _optional(s: str) -> Optional[str]:
    return s if s else None


def read_claims(path: str | Path) -> List[ClaimLine]:
    df = _read_csv(path, CLAIMS_COLUMNS)
    if df.empty:
        return []

    classes = df["claim_class"].str.lower()
    known = {c.value for c in ClaimClass}
    bad = ~classes.isin(known).to_numpy()
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"unknown claim_class {df['claim_class'].iat[line - 2]!r}", path, line)

    dates = _parse_dates(df, "service_date", path)
    amounts = _parse_float(df, "allowed_amount", path)

    days_raw = df["inpatient_days"]
    days_num = pd.to_numeric(days_raw, errors="coerce").to_numpy(dtype=float)
    bad = (days_raw != "").to_numpy() & ~(np.isfinite(days_num) & (days_num >= 0) & (days_num == np.floor(days_num)))
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"inpatient_days must be a nonnegative integer, got {days_raw.iat[line - 2]!r}", path, line)

    bad = (days_raw != "").to_numpy() & (classes != ClaimClass.INPATIENT.value).to_numpy()
    if bad.any():
        raise IngestError("inpatient_days present on a non-inpatient claim", path, _line_of(bad))
    bad = (df["drug_class"] != "").to_numpy() & (classes != ClaimClass.PHARMACY.value).to_numpy()
    if bad.any():
        raise IngestError("drug_class present on a non-pharmacy claim", path, _line_of(bad))

    cond = normalize_code_series(df["condition_code"]).tolist()
    proc = normalize_code_series(df["procedure_code"]).tolist()
    drug = normalize_code_series(df["drug_class"]).tolist()
    has_days = (days_raw != "").to_numpy()

    out: List[ClaimLine] = []
    by_value = {c.value: c for c in ClaimClass}
    for i, (mid, cls) in enumerate(zip(df["member_id"].tolist(), classes.tolist())):
        if not mid:
            raise IngestError("empty member_id", path, i + 2)
        out.append(
            ClaimLine(
                member_id=mid,
                service_date=dates[i],  # type: ignore[arg-type]
                claim_class=by_value[cls],
                allowed_amount=float(amounts[i]),
                condition_code=_optional(cond[i]),
                procedure_code=_optional(proc[i]),
                drug_class=_optional(drug[i]),
                inpatient_days=int(days_num[i]) if has_days[i] else None,
            )
        )
    return out


def read_enrollment(path: str | Path) -> List[EnrollmentSpan]:
    df = _read_csv(path, ENROLLMENT_COLUMNS)
    if df.empty:
        return []
    starts = _parse_dates(df, "start_date", path)
    ends = _parse_dates(df, "end_date", path)
    med = _parse_bool01(df, "has_medical", path)
    rx = _parse_bool01(df, "has_pharmacy", path)

    out: List[EnrollmentSpan] = []
    for i, mid in enumerate(df["member_id"].tolist()):
        if not mid:
            raise IngestError("empty member_id", path, i + 2)
        if starts[i] > ends[i]:  # type: ignore[operator]
            raise IngestError("start_date after end_date", path, i + 2)
        out.append(EnrollmentSpan(mid, starts[i], ends[i], med[i], rx[i]))  # type: ignore[arg-type]
    return out


def read_members(path: str | Path) -> Dict[str, dict]:
    df = _read_csv(path, MEMBERS_COLUMNS)
    if df.empty:
        return {}
    births = _parse_dates(df, "birth_date", path, allow_empty=True)
    genders = df["gender"].str.upper()
    bad = ~genders.isin(["F", "M", ""]).to_numpy()
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"gender must be F or M, got {df['gender'].iat[line - 2]!r}", path, line)

    out: Dict[str, dict] = {}
    for i, mid in enumerate(df["member_id"].tolist()):
        if not mid:
            raise IngestError("empty member_id", path, i + 2)
        if mid in out:
            raise IngestError(f"duplicate member_id {mid}", path, i + 2)
        g = genders.iat[i]
        out[mid] = {
            "birth_date": births[i],
            "gender": Gender(g) if g else None,
            "zip": _optional(df["zip"].iat[i]),
            "industry": _optional(df["industry"].iat[i]),
        }
    return out


def read_sdoh(path: str | Path, indicator_names: Optional[Sequence[str]] = None) -> SdohTable:
    df = _read_csv(path, ("zip", "minority_fraction"))
    names = list(indicator_names) if indicator_names else [c for c in df.columns if c != "zip"]
    if "minority_fraction" not in names:
        names.insert(0, "minority_fraction")
    missing = [n for n in names if n not in df.columns]
    if missing:
        raise IngestError(f"missing SDOH indicator columns {missing}", path, 1)

    bad = (df["zip"].str.len() != 5).to_numpy()
    if bad.any():
        line = _line_of(bad)
        raise IngestError(f"zip must be 5 characters, got {df['zip'].iat[line - 2]!r}", path, line)
    dup = df["zip"].duplicated().to_numpy()
    if dup.any():
        line = _line_of(dup)
        raise IngestError(f"duplicate zip {df['zip'].iat[line - 2]}", path, line)

    cols: Dict[str, np.ndarray] = {}
    for n in names:
        cols[n] = _parse_float(df, n, path, allow_empty=(n != "minority_fraction"))
    mf = cols["minority_fraction"]
    bad = (mf < 0.0) | (mf > 1.0)
    if bad.any():
        raise IngestError("minority_fraction outside [0,1]", path, _line_of(bad))

    records = []
    for i, z in enumerate(df["zip"].tolist()):
        ind = {n: (None if np.isnan(cols[n][i]) else float(cols[n][i])) for n in names}
        records.append(SdohRecord(z, ind))
    return SdohTable(names, records)


def _check_overlaps(member_id: str, spans: List[EnrollmentSpan]) -> None:
    for prev, nxt in zip(spans, spans[1:]):
        if nxt.start_date <= prev.end_date:
            raise ValidationError(
                f"overlapping enrollment spans for member {member_id}: "
                f"{prev.start_date}..{prev.end_date} and {nxt.start_date}..{nxt.end_date}"
            )


def build_store(
    claims: Iterable[ClaimLine],
    spans: Iterable[EnrollmentSpan],
    members: Optional[Mapping[str, dict]] = None,
) -> MemberStore:
    members = members or {}
    claims_by: Dict[str, List[ClaimLine]] = {}
    for c in claims:
        claims_by.setdefault(c.member_id, []).append(c)
    spans_by: Dict[str, List[EnrollmentSpan]] = {}
    for s in spans:
        spans_by.setdefault(s.member_id, []).append(s)

    records: List[MemberRecord] = []
    for mid in sorted(set(claims_by) | set(spans_by) | set(members)):
        cl = sorted(claims_by.get(mid, []), key=ClaimLine.sort_key)
        sp = sorted(spans_by.get(mid, []), key=lambda s: (s.start_date, s.end_date))
        _check_overlaps(mid, sp)
        demo = members.get(mid, {})
        records.append(
            MemberRecord(
                member_id=mid,
                birth_date=demo.get("birth_date"),
                gender=demo.get("gender"),
                zip=demo.get("zip"),
                industry=demo.get("industry"),
                claims=tuple(cl),
                spans=tuple(sp),
            )
        )
    return MemberStore(records)


def ingest_dataset(
    claims_file: str | Path,
    enrollment_file: str | Path,
    sdoh_file: str | Path,
    members_file: Optional[str | Path] = None,
    sdoh_indicators: Optional[Sequence[str]] = None,
) -> Tuple[MemberStore, SdohTable]:
    claims = read_claims(claims_file)
    spans = read_enrollment(enrollment_file)
    members = read_members(members_file) if members_file else {}
    sdoh = read_sdoh(sdoh_file, sdoh_indicators)

    store = build_store(claims, spans, members)
    store.summary = IngestSummary(
        claim_rows=len(claims),
        enrollment_rows=len(spans),
        member_rows=len(members),
        sdoh_rows=len(sdoh),
        members=len(store),
        total_allowed=math.fsum(c.allowed_amount for c in claims),
    )
    logger.info(
        "[OK] ingested claims=%d enrollment=%d members=%d sdoh=%d -> %d member records",
        len(claims), len(spans), len(members), len(sdoh), len(store),
    )
    return store, sdoh


# ----------------------------- cohort -----------------------------

def window_total(claims: Sequence[ClaimLine], start: date, end: date) -> float:
    return math.fsum(c.allowed_amount for c in claims if start <= c.service_date <= end)


def age_band_for(age: Optional[int]) -> AgeBand:
    if age is None:
        return AgeBand.UNKNOWN
    if age < 18:
        return AgeBand.CHILD
    if age < 65:
        return AgeBand.ADULT
    return AgeBand.SENIOR


def tag_strata(member: MemberRecord, tags: CohortTags, periods: PeriodPair) -> CohortTags:
    """Fill the stratum fields; members without a birth date get the unknown band."""
    rs, re_ = periods.report_start, periods.report_end
    overlapping = [s for s in member.spans if s.overlap_days(rs, re_) > 0]
    return replace(
        tags,
        age_band=age_band_for(member.age_at(re_)),
        has_pharmacy_benefit=any(s.has_pharmacy for s in overlapping),
        full_year_enrolled=member.covered_days(rs, re_) >= periods.report_days,
        gender=member.gender,
    )


def is_recurrent(member: MemberRecord, periods: PeriodPair, threshold: float) -> bool:
    if max(0.0, window_total(member.claims, periods.report_start, periods.report_end)) > threshold:
        return True
    earliest = member.earliest_date()
    if earliest is None:
        return False
    k = 1
    while True:
        start = periods.months_back(12 * k)
        end = periods.months_back(12 * (k - 1)) - timedelta(days=1)
        if end < earliest:
            return False
        if max(0.0, window_total(member.claims, start, end)) > threshold:
            return True
        k += 1


def member_tags(member: MemberRecord, periods: PeriodPair, threshold: float = HICC_THRESHOLD) -> CohortTags:
    eligible = member.covered(periods.last_report_month_start) and member.covered(periods.first_predict_month_end)
    predict_total = max(0.0, window_total(member.claims, periods.predict_start, periods.predict_end))
    tags = CohortTags(
        eligible=eligible,
        label_hicc=predict_total > threshold,
        predict_total=predict_total,
        recurrent=is_recurrent(member, periods, threshold),
    )
    return tag_strata(member, tags, periods)


def assemble_cohort(
    store: Iterable[MemberRecord],
    periods: PeriodPair,
    threshold: float = HICC_THRESHOLD,
) -> List[Tuple[MemberRecord, CohortTags]]:
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    out = [(m, member_tags(m, periods, threshold)) for m in store]
    n_elig = sum(1 for _, t in out if t.eligible)
    n_pos = sum(1 for _, t in out if t.eligible and t.label_hicc)
    logger.info("[OK] cohort members=%d eligible=%d hicc=%d", len(out), n_elig, n_pos)
    return out


def band_counts(cohort: Iterable[Tuple[MemberRecord, CohortTags]], eligible_only: bool = True) -> Dict[AgeBand, int]:
    counts = {b: 0 for b in AgeBand}
    for _, t in cohort:
        if eligible_only and not t.eligible:
            continue
        counts[t.age_band] += 1
    return counts
