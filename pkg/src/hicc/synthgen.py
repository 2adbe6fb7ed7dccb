"""
Seeded synthetic claims population with a planted cost-history signal.

Every member draws from its own random stream (seed + member index), so
generation is deterministic regardless of how members are split across workers.
Member-level flags (future HiCC, pharmacy benefit, full-year enrollment, ...) are
drawn up front from a separate stream so their realized rates can be checked
without generating claims.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta
from joblib import Parallel, delayed
from scipy.optimize import brentq
from scipy.stats import norm

from .claims import CLAIMS_COLUMNS, ENROLLMENT_COLUMNS, HICC_THRESHOLD, MEMBERS_COLUMNS, PeriodPair
from .errors import ValidationError

logger = logging.getLogger(__name__)

# Costliest HiCC conditions in descending frequency order.
DEFAULT_CONDITION_MIX: Tuple[Tuple[str, float], ...] = (
    ("cancer_nos", 20.0),
    ("coronary_artery_disease", 12.0),
    ("pneumonia", 9.0),
    ("renal_failure_acute", 8.0),
    ("heart_failure", 8.0),
    ("renal_failure_chronic", 7.0),
    ("cancer_breast", 6.0),
    ("sepsis", 4.0),
    ("respiratory_failure", 4.0),
    ("cancer_lung", 4.0),
    ("polyneuropathy", 3.0),
    ("endocrine_disorder", 3.0),
    ("multiple_myeloma", 3.0),
    ("cancer_colon", 3.0),
    ("regional_enteritis", 2.0),
    ("coagulation_defect", 2.0),
    ("cancer_brain", 1.0),
    ("hemolytic_anemia", 1.0),
    ("acute_lymphoid_leukemia", 1.0),
    ("acute_myeloid_leukemia", 1.0),
)

# condition -> (ICD-10 code, drug class or None, procedure code)
CONDITIONS: Dict[str, Tuple[str, Optional[str], str]] = {
    "cancer_nos": ("C80.1", "21100010", "96413"),
    "coronary_artery_disease": ("I25.10", "83370030", "33533"),
    "pneumonia": ("J18.9", None, "71046"),
    "renal_failure_acute": ("N17.9", None, "90935"),
    "heart_failure": ("I50.9", "37200030", "93306"),
    "renal_failure_chronic": ("N18.6", "37200030", "90935"),
    "cancer_breast": ("C50.919", "21402010", "96413"),
    "sepsis": ("A41.9", None, "99291"),
    "respiratory_failure": ("J96.00", None, "94002"),
    "cancer_lung": ("C34.90", "21100010", "77386"),
    "polyneuropathy": ("G62.9", "62540030", "95907"),
    "endocrine_disorder": ("E34.9", "30100010", "80053"),
    "multiple_myeloma": ("C90.00", "21530050", "38241"),
    "cancer_colon": ("C18.9", "21100010", "44140"),
    "regional_enteritis": ("K50.90", "52505020", "45378"),
    "coagulation_defect": ("D68.0", "85100020", "85240"),
    "cancer_brain": ("C71.9", "21100010", "61510"),
    "hemolytic_anemia": ("D59.1", None, "36430"),
    "acute_lymphoid_leukemia": ("C91.00", "21100010", "38241"),
    "acute_myeloid_leukemia": ("C92.00", "21100010", "38241"),
}
COMMON_CONDITIONS = ("I10", "E11.9", "J06.9", "M54.50", "Z00.00", "F41.9", "E78.5", "K21.9")
COMMON_DRUGS = ("36100030", "27250050", "39400010", "58160070", "49270070")
COMMON_PROCEDURES = ("99213", "99214", "80053", "85025", "71046")
ED_PROCEDURE = "99285"
INDUSTRIES = ("manufacturing", "retail", "education", "healthcare", "finance", "public", "construction")

HICC_COST_SIGMA = 0.9
HISTORY_YEARS = 2


@dataclass(frozen=True)
class GenParams:
    n_members: int = 50_000
    hicc_prevalence: float = 0.0016
    mean_hicc_cost: float = 413_975.0
    condition_mix: Tuple[Tuple[str, float], ...] = DEFAULT_CONDITION_MIX
    frac_full_year: float = 0.78
    frac_pharmacy: float = 0.63
    seed: int = 0
    signal_strength: float = 1.0
    minority_effect: float = 0.0
    recurrent_share: float = 0.14
    frac_ineligible: float = 0.02
    n_zips: int = 0
    report_start: date = date(2017, 4, 1)
    threshold: float = HICC_THRESHOLD

    def __post_init__(self) -> None:
        if self.n_members <= 0:
            raise ValidationError("n_members must be positive")
        for name in ("hicc_prevalence", "frac_full_year", "frac_pharmacy", "recurrent_share", "frac_ineligible"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must be in [0,1], got {v}")
        if self.mean_hicc_cost <= self.threshold:
            raise ValidationError("mean_hicc_cost must exceed the HiCC threshold")
        if self.signal_strength < 0:
            raise ValidationError("signal_strength must be nonnegative")
        weights = [w for _, w in self.condition_mix]
        if not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValidationError("condition_mix weights must be nonnegative and sum to a positive value")
        unknown = [c for c, _ in self.condition_mix if c not in CONDITIONS]
        if unknown:
            raise ValidationError(f"unknown conditions in condition_mix: {unknown}")

    @property
    def periods(self) -> PeriodPair:
        return PeriodPair.from_report(self.report_start)

    @property
    def zip_count(self) -> int:
        return self.n_zips if self.n_zips > 0 else int(min(2000, max(10, self.n_members // 200)))


@dataclass(frozen=True)
class GeneratedDataset:
    claims: Path
    enrollment: Path
    members: Path
    sdoh: Path
    manifest: Path


@dataclass(frozen=True)
class StatCheck:
    name: str
    realized: float
    target: float
    sigma: float
    flagged: bool

    @property
    def z(self) -> float:
        if self.sigma <= 0:
            return 0.0 if self.realized == self.target else math.inf
        return (self.realized - self.target) / self.sigma


@dataclass(frozen=True)
class ValidationReport:
    n_members: int
    n_hicc: int
    checks: Tuple[StatCheck, ...]
    degenerate: bool

    @property
    def flagged(self) -> List[str]:
        out = [c.name for c in self.checks if c.flagged]
        if self.degenerate:
            out.append("degenerate")
        return out

    def check(self, name: str) -> StatCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def render(self) -> str:
        lines = [f"members={self.n_members} hicc={self.n_hicc}"]
        for c in self.checks:
            mark = "FLAG" if c.flagged else "ok"
            lines.append(f"{c.name:<20} realized={c.realized:.6g} target={c.target:.6g} sigma={c.sigma:.3g} [{mark}]")
        if self.degenerate:
            lines.append("[WARN] degenerate population: no HiCC members")
        return "\n".join(lines) + "\n"


# ----------------------------- random streams -----------------------------

def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def calibrate_lognormal_mu(target_mean: float, lower: float, sigma: float = HICC_COST_SIGMA) -> float:
    """mu such that a lognormal(mu, sigma) truncated below at `lower` has mean `target_mean`."""
    log_t = math.log(lower)

    def gap(mu: float) -> float:
        a = (mu + sigma * sigma - log_t) / sigma
        b = (mu - log_t) / sigma
        return mu + 0.5 * sigma * sigma + norm.logcdf(a) - norm.logcdf(b) - math.log(target_mean)

    return float(brentq(gap, log_t - 40.0, log_t + 40.0, xtol=1e-12))


def draw_truncated_lognormal(rng: np.random.Generator, mu: float, lower: float, size: int, sigma: float = HICC_COST_SIGMA) -> np.ndarray:
    tail = norm.sf((math.log(lower) - mu) / sigma)
    v = rng.uniform(0.0, tail, size=size)
    v = np.maximum(v, np.finfo(float).tiny)
    return np.exp(mu + sigma * norm.isf(v))


def draw_member_flags(params: GenParams) -> Dict[str, np.ndarray]:
    """Member-level Bernoulli flags, drawn vectorized from the flags stream."""
    rng = _stream(params.seed, 0)
    n = params.n_members
    p = params.hicc_prevalence
    hicc = rng.random(n) < p
    pharmacy = rng.random(n) < params.frac_pharmacy
    full_year = rng.random(n) < params.frac_full_year
    ineligible = rng.random(n) < params.frac_ineligible
    recurrent = hicc & (rng.random(n) < params.recurrent_share)
    # prior high-cost members who do not become HiCC again: ~1.7x the recurrent HiCCs
    prior_high_rate = min(1.0, 1.7 * params.recurrent_share * p / max(1e-12, 1.0 - p))
    prior_high = ~hicc & (rng.random(n) < prior_high_rate)
    chronic = ~hicc & (rng.random(n) < 0.08)
    return {
        "hicc": hicc,
        "pharmacy": pharmacy,
        "full_year": full_year,
        "ineligible": ineligible,
        "recurrent": recurrent,
        "prior_high": prior_high,
        "chronic": chronic,
    }


def draw_zips(params: GenParams) -> Tuple[List[str], np.ndarray]:
    rng = _stream(params.seed, 2)
    k = params.zip_count
    zips = [f"{10000 + 37 * i:05d}"[-5:] for i in range(k)]
    minority = np.round(rng.beta(2.0, 5.0, size=k), 6)
    return zips, minority


# ----------------------------- claims -----------------------------

@dataclass
class _Columns:
    claims: Dict[str, list] = field(default_factory=lambda: {c: [] for c in CLAIMS_COLUMNS})
    enrollment: Dict[str, list] = field(default_factory=lambda: {c: [] for c in ENROLLMENT_COLUMNS})
    members: Dict[str, list] = field(default_factory=lambda: {c: [] for c in MEMBERS_COLUMNS})

    def extend(self, other: "_Columns") -> None:
        for mine, theirs in ((self.claims, other.claims), (self.enrollment, other.enrollment), (self.members, other.members)):
            for k in mine:
                mine[k].extend(theirs[k])


def _class_probs(total: float, pharmacy: bool) -> Tuple[List[str], np.ndarray]:
    classes = ["professional", "outpatient", "ambulatory", "emergency", "inpatient", "pharmacy"]
    w = np.array([0.45, 0.15, 0.10, 0.05, 0.05, 0.20])
    if total > 50_000:
        w[4] = 0.20
    if not pharmacy:
        w[5] = 0.0
    return classes, w / w.sum()


def _emit_window(
    cols: _Columns,
    rng: np.random.Generator,
    member_id: str,
    total: float,
    start: date,
    end: date,
    coverage_start: date,
    coverage_end: date,
    trend: float,
    pharmacy: bool,
    triggers: Sequence[str],
    allow_adjustment: bool = True,
) -> None:
    lo = max(start, coverage_start)
    hi = min(end, coverage_end)
    if lo > hi or total <= 0:
        return
    n_days = (hi - lo).days + 1
    lam = 1.5 + 1.2 * math.log10(total + 1.0)
    n = 1 + int(rng.poisson(lam))
    offsets = np.floor(rng.random(n) ** (1.0 / trend) * n_days).astype(int)
    offsets = np.minimum(offsets, n_days - 1)
    amounts = np.round(rng.dirichlet(np.ones(n)) * total, 2)
    amounts[-1] = round(round(total, 2) - float(amounts[:-1].sum()), 2)

    classes, probs = _class_probs(total, pharmacy)
    picks = rng.choice(len(classes), size=n, p=probs)
    c = cols.claims
    for k in range(n):
        cls = classes[picks[k]]
        trig = triggers[int(rng.integers(len(triggers)))] if triggers and rng.random() < 0.6 else None
        cond: Optional[str] = None
        proc: Optional[str] = None
        drug: Optional[str] = None
        days: Optional[int] = None
        if cls == "pharmacy":
            if trig is not None and CONDITIONS[trig][1] is not None:
                drug = CONDITIONS[trig][1]
            else:
                drug = COMMON_DRUGS[int(rng.integers(len(COMMON_DRUGS)))]
        else:
            if trig is not None:
                cond, _, proc = CONDITIONS[trig]
            else:
                cond = COMMON_CONDITIONS[int(rng.integers(len(COMMON_CONDITIONS)))]
                proc = COMMON_PROCEDURES[int(rng.integers(len(COMMON_PROCEDURES)))]
            if cls == "emergency" and trig is None:
                proc = ED_PROCEDURE
            if cls == "inpatient":
                days = 1 + int(rng.poisson(8.0 if total > 50_000 else 3.0))
        d = lo + timedelta(days=int(offsets[k]))
        c["member_id"].append(member_id)
        c["service_date"].append(d.isoformat())
        c["claim_class"].append(cls)
        c["allowed_amount"].append(float(amounts[k]))
        c["condition_code"].append(cond or "")
        c["procedure_code"].append(proc or "")
        c["drug_class"].append(drug or "")
        c["inpatient_days"].append("" if days is None else str(days))

    if allow_adjustment and rng.random() < 0.02:
        # reversal of part of the first claim
        i0 = len(c["member_id"]) - n
        back = round(-float(amounts[0]) * float(rng.uniform(0.1, 0.5)), 2)
        for col in CLAIMS_COLUMNS:
            c[col].append(c[col][i0])
        c["allowed_amount"][-1] = back


def _member_age(rng: np.random.Generator, is_hicc: bool, strength: float) -> int:
    if is_hicc and rng.random() < min(1.0, 0.35 * strength):
        return int(rng.integers(45, 81))
    band = rng.random()
    if band < 0.21:
        return int(rng.integers(0, 18))
    if band < 0.97:
        return int(rng.integers(18, 65))
    return int(rng.integers(65, 86))


def _generate_member(
    cols: _Columns,
    i: int,
    params: GenParams,
    flags: Dict[str, np.ndarray],
    zips: List[str],
    zip_weights_base: np.ndarray,
    zip_weights_hicc: np.ndarray,
    hicc_mu: float,
) -> None:
    rng = _stream(params.seed, 1, i)
    periods = params.periods
    s = params.signal_strength
    T = params.threshold
    member_id = f"M{i:08d}"
    is_hicc = bool(flags["hicc"][i])
    pharmacy = bool(flags["pharmacy"][i])

    # demographics
    age = _member_age(rng, is_hicc, s)
    birth = periods.report_end - relativedelta(years=age) - timedelta(days=int(rng.integers(0, 365)))
    gender = "F" if rng.random() < 0.5 else "M"
    zip_code = ""
    if rng.random() >= 0.01:
        w = zip_weights_hicc if is_hicc else zip_weights_base
        zip_code = zips[int(rng.choice(len(zips), p=w))]
    industry = INDUSTRIES[int(rng.integers(len(INDUSTRIES)))]
    m = cols.members
    m["member_id"].append(member_id)
    m["birth_date"].append(birth.isoformat())
    m["gender"].append(gender)
    m["zip"].append(zip_code)
    m["industry"].append(industry)

    # enrollment
    history_start = periods.months_back(12 * HISTORY_YEARS)
    if flags["full_year"][i]:
        cov_start = history_start if rng.random() < 0.7 else periods.report_start - timedelta(days=int(rng.integers(1, 700)))
    else:
        cov_start = periods.report_start + timedelta(days=int(rng.integers(1, 301)))
    cov_end = periods.predict_end
    if flags["ineligible"][i]:
        cov_end = periods.predict_start + timedelta(days=int(rng.integers(0, 20)))
    spans = [(cov_start, cov_end)]
    if (cov_end - cov_start).days > 90 and rng.random() < 0.3:
        cut = cov_start + timedelta(days=int(rng.integers(30, (cov_end - cov_start).days - 30)))
        spans = [(cov_start, cut), (cut + timedelta(days=1), cov_end)]
    e = cols.enrollment
    for a, b in spans:
        e["member_id"].append(member_id)
        e["start_date"].append(a.isoformat())
        e["end_date"].append(b.isoformat())
        e["has_medical"].append("1")
        e["has_pharmacy"].append("1" if pharmacy else "0")

    # conditions
    names = [c for c, _ in params.condition_mix]
    weights = np.array([w for _, w in params.condition_mix], dtype=float)
    weights = weights / weights.sum()
    if is_hicc:
        p_trigger = min(0.95, 0.25 + 0.4 * s)
    elif flags["chronic"][i]:
        p_trigger = 0.15
    else:
        p_trigger = 0.01
    triggers: List[str] = []
    if rng.random() < p_trigger:
        triggers.append(names[int(rng.choice(len(names), p=weights))])
        if is_hicc and rng.random() < 0.3:
            triggers.append(names[int(rng.choice(len(names), p=weights))])

    # costs per window
    base = float(rng.lognormal(math.log(3000.0), 1.3))
    if flags["chronic"][i]:
        base *= 6.0
    if rng.random() < 0.15 and not is_hicc:
        base = 0.0
    if is_hicc:
        report_cost = base * math.exp(1.3 * s) + (20_000.0 * s if triggers else 0.0)
    else:
        report_cost = base
    cap = 0.8 * T
    if flags["recurrent"][i] or flags["prior_high"][i]:
        report_cost = float(draw_truncated_lognormal(rng, hicc_mu, T + 1.0, 1)[0])
    else:
        report_cost = min(report_cost, cap)
    prior1 = min(report_cost * float(rng.lognormal(-0.2, 0.5)), cap)
    prior2 = min(prior1 * float(rng.lognormal(-0.1, 0.5)), cap)
    if is_hicc:
        predict_cost = float(draw_truncated_lognormal(rng, hicc_mu, T + 1.0, 1)[0])
    else:
        predict_cost = min(report_cost * float(rng.lognormal(0.0, 0.6)), cap)

    trend_report = 1.0 + 1.5 * s if is_hicc else 1.0
    windows = [
        (prior2, periods.months_back(24), periods.months_back(12) - timedelta(days=1), 1.0, True),
        (prior1, periods.months_back(12), periods.report_start - timedelta(days=1), 1.0, True),
        (report_cost, periods.report_start, periods.report_end, trend_report, True),
        (predict_cost, periods.predict_start, periods.predict_end, 1.0, not is_hicc),
    ]
    for total, a, b, trend, adjust in windows:
        _emit_window(cols, rng, member_id, total, a, b, cov_start, cov_end, trend, pharmacy, triggers, adjust)


def _generate_chunk(
    indices: range,
    params: GenParams,
    flags: Dict[str, np.ndarray],
    zips: List[str],
    zip_weights_base: np.ndarray,
    zip_weights_hicc: np.ndarray,
    hicc_mu: float,
) -> _Columns:
    cols = _Columns()
    for i in indices:
        _generate_member(cols, i, params, flags, zips, zip_weights_base, zip_weights_hicc, hicc_mu)
    return cols


def _sdoh_frame(params: GenParams, indicator_names: Sequence[str], zips: List[str], minority: np.ndarray) -> pd.DataFrame:
    rng = _stream(params.seed, 3)
    names = [n for n in indicator_names if n != "minority_fraction"]
    data: Dict[str, object] = {"zip": zips, "minority_fraction": minority}
    for k, name in enumerate(names):
        noise = rng.beta(2.0, 5.0, size=len(zips))
        # every third indicator co-varies with minority_fraction
        if k % 3 == 0:
            noise = np.clip(0.5 * noise + 0.5 * minority, 0.0, 1.0)
        data[name] = np.round(noise, 6)
    return pd.DataFrame(data)


def _write_manifest(path: Path, params: GenParams) -> None:
    lines = []
    for f in fields(params):
        v = getattr(params, f.name)
        if f.name == "condition_mix":
            v = ";".join(f"{c}:{w:g}" for c, w in v)
        lines.append(f"{f.name}={v}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate_population(
    params: GenParams,
    out_dir: str | Path,
    indicator_names: Sequence[str] = ("minority_fraction",),
    workers: int = 1,
) -> GeneratedDataset:
    if params.n_members * params.hicc_prevalence < 10:
        logger.warning(
            "[WARN] expected HiCC count %.1f < 10: too few positives for training",
            params.n_members * params.hicc_prevalence,
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    flags = draw_member_flags(params)
    zips, minority = draw_zips(params)
    base_w = np.full(len(zips), 1.0 / len(zips))
    hicc_w = np.exp(params.minority_effect * minority)
    hicc_w = hicc_w / hicc_w.sum()
    hicc_mu = calibrate_lognormal_mu(params.mean_hicc_cost, params.threshold + 1.0)

    n = params.n_members
    n_chunks = max(1, min(n, 4 * max(1, workers)))
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    chunks = [range(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    parts = Parallel(n_jobs=workers)(
        delayed(_generate_chunk)(ch, params, flags, zips, base_w, hicc_w, hicc_mu) for ch in chunks
    )
    cols = _Columns()
    for part in parts:
        cols.extend(part)

    dataset = GeneratedDataset(
        claims=out / "claims.csv",
        enrollment=out / "enrollment.csv",
        members=out / "members.csv",
        sdoh=out / "sdoh.csv",
        manifest=out / "gen_manifest.txt",
    )
    pd.DataFrame(cols.claims, columns=list(CLAIMS_COLUMNS)).to_csv(
        dataset.claims, index=False, float_format="%.2f", lineterminator="\n"
    )
    pd.DataFrame(cols.enrollment, columns=list(ENROLLMENT_COLUMNS)).to_csv(
        dataset.enrollment, index=False, lineterminator="\n"
    )
    pd.DataFrame(cols.members, columns=list(MEMBERS_COLUMNS)).to_csv(
        dataset.members, index=False, lineterminator="\n"
    )
    _sdoh_frame(params, indicator_names, zips, minority).to_csv(
        dataset.sdoh, index=False, float_format="%.6f", lineterminator="\n"
    )
    _write_manifest(dataset.manifest, params)
    logger.info(
        "[OK] generated members=%d claims=%d hicc_flags=%d -> %s",
        n, len(cols.claims["member_id"]), int(flags["hicc"].sum()), out,
    )
    return dataset


# ----------------------------- validation -----------------------------

def _proportion_check(name: str, realized: float, target: float, n: int) -> StatCheck:
    sigma = math.sqrt(max(target * (1.0 - target), 0.0) / max(n, 1))
    flagged = abs(realized - target) > 4.0 * sigma if sigma > 0 else realized != target
    return StatCheck(name, realized, target, sigma, flagged)


def validate_generated(dataset: GeneratedDataset, params: GenParams) -> ValidationReport:
    periods = params.periods
    claims = pd.read_csv(dataset.claims, usecols=["member_id", "service_date", "allowed_amount"], dtype={"member_id": str, "service_date": str})
    spans = pd.read_csv(dataset.enrollment, dtype={"member_id": str, "start_date": str, "end_date": str})
    members = pd.read_csv(dataset.members, usecols=["member_id"], dtype=str)
    n = len(members)

    in_predict = (claims["service_date"] >= periods.predict_start.isoformat()) & (
        claims["service_date"] <= periods.predict_end.isoformat()
    )
    totals = claims[in_predict].groupby("member_id")["allowed_amount"].sum().clip(lower=0.0)
    hicc_totals = totals[totals > params.threshold]
    n_hicc = int(len(hicc_totals))

    rs, re_ = periods.report_start, periods.report_end
    starts = pd.to_datetime(spans["start_date"]).dt.date
    ends = pd.to_datetime(spans["end_date"]).dt.date
    lo = starts.map(lambda d: max(d, rs))
    hi = ends.map(lambda d: min(d, re_))
    overlap = np.array([max(0, (h - l).days + 1) for l, h in zip(lo, hi)])
    spans = spans.assign(overlap=overlap)
    covered = spans.groupby("member_id")["overlap"].sum()
    full_year = float((covered >= periods.report_days).sum()) / max(n, 1)
    rx = spans[(spans["overlap"] > 0) & (spans["has_pharmacy"] == 1)]["member_id"].nunique()
    pharmacy = float(rx) / max(n, 1)

    checks = [
        _proportion_check("hicc_prevalence", n_hicc / max(n, 1), params.hicc_prevalence, n),
        _proportion_check("frac_full_year", full_year, params.frac_full_year, n),
        _proportion_check("frac_pharmacy", pharmacy, params.frac_pharmacy, n),
    ]
    if n_hicc >= 2:
        mean_cost = float(hicc_totals.mean())
        sigma = float(hicc_totals.std(ddof=1)) / math.sqrt(n_hicc)
        checks.append(
            StatCheck("mean_hicc_cost", mean_cost, params.mean_hicc_cost, sigma, abs(mean_cost - params.mean_hicc_cost) > 4.0 * sigma)
        )
    report = ValidationReport(n_members=n, n_hicc=n_hicc, checks=tuple(checks), degenerate=(n_hicc == 0))
    for name in report.flagged:
        logger.warning("[WARN] generated statistic outside 4 sigma of target: %s", name)
    return report
