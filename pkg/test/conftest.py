from __future__ import annotations

from datetime import date, timedelta
from pathlib import Path
from typing import List

import numpy as np
import pytest

from hicc.claims import ClaimClass, ClaimLine, EnrollmentSpan, Gender, MemberRecord, PeriodPair, SdohRecord, SdohTable
from hicc.config import REPO_ROOT
from hicc.loaders import load_catalog, load_life_table, load_sdoh_schema

CLASSES = list(ClaimClass)
CODES = ("C80.1", "N18.6", "I10", "E11.9", "J18.9", "I50.9", "")


@pytest.fixture
def periods() -> PeriodPair:
    return PeriodPair.from_report(date(2017, 4, 1))


@pytest.fixture(scope="session")
def indicators():
    return load_sdoh_schema(REPO_ROOT / "data" / "sdoh_schema.yaml")


@pytest.fixture(scope="session")
def catalog(indicators):
    return load_catalog(REPO_ROOT / "config" / "catalog.yaml", indicators)


@pytest.fixture(scope="session")
def life_table():
    return load_life_table(REPO_ROOT / "data" / "life_table.csv", REPO_ROOT / "data" / "condition_weights.csv")


@pytest.fixture(scope="session")
def sdoh_table(indicators):
    rng = np.random.default_rng(3)
    records = []
    for k in range(20):
        values = {n: float(rng.uniform()) for n in indicators}
        records.append(SdohRecord(f"{10000 + k:05d}", values))
    return SdohTable(indicators, records)


def claim(mid: str, d: date, amount: float, cls: ClaimClass = ClaimClass.PROFESSIONAL, **kw) -> ClaimLine:
    return ClaimLine(mid, d, cls, amount, **kw)


def random_member(rng: np.random.Generator, i: int, periods: PeriodPair, positive_only: bool = False) -> MemberRecord:
    """A member with claims spread over two history years, the report year and the prediction year."""
    mid = f"R{i:06d}"
    start = periods.months_back(24)
    n_days = (periods.predict_end - start).days + 1
    claims: List[ClaimLine] = []
    for _ in range(int(rng.integers(0, 40))):
        d = start + timedelta(days=int(rng.integers(0, n_days)))
        cls = CLASSES[int(rng.integers(len(CLASSES)))]
        amount = float(np.round(rng.lognormal(6.0, 1.5), 2))
        if not positive_only and rng.random() < 0.05:
            amount = -amount / 3.0
        kw = {}
        if cls is ClaimClass.PHARMACY:
            kw["drug_class"] = ("37200030", "21100010", "36100030")[int(rng.integers(3))]
        else:
            code = CODES[int(rng.integers(len(CODES)))]
            kw["condition_code"] = code or None
            kw["procedure_code"] = ("96413", "99213", "90935")[int(rng.integers(3))]
        if cls is ClaimClass.INPATIENT:
            kw["inpatient_days"] = int(rng.integers(1, 10))
        claims.append(ClaimLine(mid, d, cls, amount, **kw))
    cov_start = start + timedelta(days=int(rng.integers(0, 500)))
    spans = (EnrollmentSpan(mid, cov_start, periods.predict_end, True, bool(rng.random() < 0.6)),)
    birth = periods.report_end - timedelta(days=int(rng.integers(0, 85 * 365)))
    gender = Gender.F if rng.random() < 0.5 else Gender.M
    zip_code = f"{10000 + int(rng.integers(0, 25)):05d}"
    return MemberRecord(
        member_id=mid,
        birth_date=birth,
        gender=gender,
        zip=zip_code,
        claims=tuple(sorted(claims, key=ClaimLine.sort_key)),
        spans=spans,
    )


def write_csv(path: Path, header: str, rows: List[str]) -> Path:
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path
