from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .claims import Gender
from .errors import ValidationError

# Fixed-name families: every name a family can emit.
FAMILY_FEATURES: Dict[str, Tuple[str, ...]] = {
    "personal": ("GENDER_MALE",),
    "enrollment": ("COVERED_DAYS_12MO", "PHARMACY_COVERED_DAYS_12MO", "FULL_YEAR_ENROLLED"),
    "cost": (
        "ALLWD_AMT_CURRENT_YEAR",
        "ANNUAL_ALLWD_AMT_CURRENT_YEAR",
        "ALLWD_AMT_PRIOR_YEAR",
        "ANNUAL_ALLWD_AMT_PRIOR_YEAR",
        "ANNUAL_ALLWD_AMT_2_YEARS_PRIOR",
        "TOTAL_3_YEAR_ALLWD_AMT",
        "INPATIENT_DAYS_12MO",
        "DAYS_SINCE_LAST_CLAIM",
        "PHARMACY_ALLWD_AMT_12MO",
        "ALLWD_AMT_Q1",
        "ALLWD_AMT_Q2",
        "ALLWD_AMT_Q3",
        "ALLWD_AMT_Q4",
    ),
    "trend": ("ALLWD_AMT_CHANGE_12MO", "ALLWD_AMT_CHANGE_6MO", "ALLWD_AMT_CHANGE_3MO"),
    "wavelet": (
        "ALLWD_AMT_RISING_WV",
        "ALLWD_AMT_FALLING_WV",
        "ALLWD_AMT_SECOND_6MO_RISING_WV",
        "ALLWD_AMT_FOURTH_3MO_RISING_WV",
        "ALLWD_AMT_FOURTH_3MO_WV",
    ),
    "submodel": ("PREDICTED_12MO_ALLWD_AMT",),
    "events": (
        "EVENT_COUNT_EMERGENCY",
        "EVENT_COUNT_AMBULATORY",
        "EVENT_COUNT_INPATIENT",
        "TRG_TOTAL_ALLWD_AMT",
        "TRG_DAYS_MALIGNANCY",
    ),
    "actuarial": ("AGE", "OPTIMAL_LIFE_EXPECTANCY", "YLL_CURRENT_YR", "MORTALITY_RISK"),
}
# Parametric families: the name is free, the params say what to compute.
PARAMETRIC_FAMILIES = ("category", "sdoh")
CATEGORY_FIELDS = ("condition_code", "procedure_code", "drug_class")

TOP20_FEATURES = (
    "AGE",
    "ALLWD_AMT_FOURTH_3MO_RISING_WV",
    "OPTIMAL_LIFE_EXPECTANCY",
    "PREDICTED_12MO_ALLWD_AMT",
    "YLL_CURRENT_YR",
    "ALLWD_AMT_SECOND_6MO_RISING_WV",
    "INPATIENT_DAYS_12MO",
    "ANNUAL_ALLWD_AMT_CURRENT_YEAR",
    "TRG_DAYS_MALIGNANCY",
    "ALLWD_AMT_PRIOR_YEAR",
    "TRG_TOTAL_ALLWD_AMT",
    "ALLWD_AMT_FALLING_WV",
    "ALLWD_AMT_FOURTH_3MO_WV",
    "TOTAL_3_YEAR_ALLWD_AMT",
    "ANNUAL_ALLWD_AMT_PRIOR_YEAR",
    "MORTALITY_RISK",
    "ALLWD_AMT_RISING_WV",
    "GPI06_372000",
    "ANNUAL_ALLWD_AMT_2_YEARS_PRIOR",
    "DAYS_SINCE_LAST_CLAIM",
)

REQUIRED_CODE_LISTS = ("trigger_conditions", "cancer_trigger")


@dataclass(frozen=True)
class FeatureDef:
    name: str
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class FeatureCatalog:
    name: str
    version: str
    features: Tuple[FeatureDef, ...]
    code_lists: Mapping[str, FrozenSet[str]]

    def __post_init__(self) -> None:
        seen = set()
        for f in self.features:
            if f.name in seen:
                raise ValidationError(f"duplicate feature name {f.name} in catalog {self.name}")
            seen.add(f.name)
            if f.family in FAMILY_FEATURES:
                if f.name not in FAMILY_FEATURES[f.family]:
                    raise ValidationError(f"feature {f.name} is not produced by family {f.family}")
            elif f.family == "category":
                fld = f.params.get("field")
                if fld not in CATEGORY_FIELDS:
                    raise ValidationError(f"category feature {f.name} needs field in {CATEGORY_FIELDS}")
                if fld == "drug_class" and not f.params.get("prefixes"):
                    raise ValidationError(f"drug-class feature {f.name} needs 'prefixes'")
                if fld != "drug_class" and not f.params.get("codes"):
                    raise ValidationError(f"code feature {f.name} needs 'codes'")
            elif f.family == "sdoh":
                if not f.params.get("indicator"):
                    raise ValidationError(f"sdoh feature {f.name} needs 'indicator'")
            else:
                raise ValidationError(f"unknown feature family {f.family!r} ({f.name})")
        if any(f.family == "events" for f in self.features):
            for cl in REQUIRED_CODE_LISTS:
                if cl not in self.code_lists:
                    raise ValidationError(f"catalog {self.name} lacks code list {cl!r}")

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def __len__(self) -> int:
        return len(self.features)

    def families(self) -> FrozenSet[str]:
        return frozenset(f.family for f in self.features)

    def by_family(self, family: str) -> List[FeatureDef]:
        return [f for f in self.features if f.family == family]

    @property
    def schema_version(self) -> str:
        digest = hashlib.sha256("\n".join(self.names).encode("utf-8")).hexdigest()[:12]
        return f"{self.name}-{self.version}-{digest}"

    def missing_top20(self) -> List[str]:
        names = set(self.names)
        return [n for n in TOP20_FEATURES if n not in names]

    def subset(self, keep: Iterable[str]) -> "FeatureCatalog":
        keep_set = set(keep)
        return FeatureCatalog(
            name=self.name,
            version=f"{self.version}.pruned{len(keep_set)}",
            features=tuple(f for f in self.features if f.name in keep_set),
            code_lists=self.code_lists,
        )

    def to_doc(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "code_lists": {k: sorted(v) for k, v in sorted(self.code_lists.items())},
            "features": [
                {"name": f.name, "family": f.family, **{k: v for k, v in f.params.items()}}
                for f in self.features
            ],
        }


@dataclass(frozen=True)
class LifeTable:
    """Remaining life expectancy by (gender, age) plus years-lost weights per condition."""

    expectancy: Mapping[Gender, Tuple[Tuple[int, float], ...]]
    years_lost: Mapping[str, float]

    def __post_init__(self) -> None:
        for g, rows in self.expectancy.items():
            if not rows:
                raise ValidationError(f"life table has no rows for gender {g.value}")
            prev: Optional[float] = None
            for age, e in rows:
                if e <= 0:
                    raise ValidationError(f"life expectancy must be positive (age {age}, {g.value})")
                if prev is not None and e > prev:
                    raise ValidationError(f"life expectancy increases at age {age} ({g.value})")
                prev = e
        for code, w in self.years_lost.items():
            if w < 0:
                raise ValidationError(f"negative years_lost for {code}")
        object.__setattr__(self, "_index", {g: dict(rows) for g, rows in self.expectancy.items()})

    def lookup(self, age: int, gender: Gender) -> float:
        rows = self.expectancy[gender]
        a = min(max(age, rows[0][0]), rows[-1][0])
        hit = self._index[gender].get(a)  # type: ignore[attr-defined]
        if hit is not None:
            return hit
        return min(rows, key=lambda r: (abs(r[0] - a), r[0]))[1]
