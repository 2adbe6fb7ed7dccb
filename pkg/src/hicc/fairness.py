from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .claims import SdohTable
from .errors import ValidationError

logger = logging.getLogger(__name__)

SCATTER_COLUMNS = ("zip", "n", "mean_score", "mean_cost", "minority_fraction")


@dataclass(frozen=True)
class AuditRecord:
    member_id: str
    zip: Optional[str]
    score: float
    annual_cost: float


@dataclass(frozen=True)
class ZipAggregate:
    zip: str
    n_members: int
    mean_score: float
    mean_annual_cost: float
    minority_fraction: float

    def __post_init__(self) -> None:
        if self.n_members < 1:
            raise ValidationError(f"zip {self.zip} has no members")
        if not (0.0 <= self.mean_score <= 1.0):
            raise ValidationError(f"mean score outside [0,1] for zip {self.zip}")


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    r_squared: float
    n: int


@dataclass(frozen=True)
class AuditReport:
    aggregates: Tuple[ZipAggregate, ...]
    excluded: int
    score_fit: OlsFit
    cost_fit: OlsFit
    null_r_squared: Tuple[float, ...]
    weighted: bool

    @property
    def null_band(self) -> Tuple[float, float]:
        if not self.null_r_squared:
            return (0.0, 0.0)
        return (min(self.null_r_squared), max(self.null_r_squared))

    @property
    def score_inside_null_band(self) -> bool:
        """Observed score R^2 does not exceed the largest permuted R^2.

        Only the upper end is tested: an R^2 below every permuted value is
        no evidence of dependence, so it counts as inside.
        """
        return self.score_fit.r_squared <= self.null_band[1]


def zip_aggregate(records: Iterable[AuditRecord], sdoh_table: SdohTable) -> Tuple[List[ZipAggregate], int]:
    """Per-zip means in zip order; members without a resolvable zip are excluded and counted."""
    scores: Dict[str, List[float]] = {}
    costs: Dict[str, List[float]] = {}
    excluded = 0
    for r in records:
        rec = sdoh_table.get(r.zip)
        if rec is None:
            excluded += 1
            continue
        scores.setdefault(rec.zip, []).append(r.score)
        costs.setdefault(rec.zip, []).append(r.annual_cost)
    out = []
    for z in sorted(scores):
        n = len(scores[z])
        out.append(
            ZipAggregate(
                zip=z,
                n_members=n,
                mean_score=math.fsum(scores[z]) / n,
                mean_annual_cost=math.fsum(costs[z]) / n,
                minority_fraction=sdoh_table.get(z).minority_fraction,  # type: ignore[union-attr]
            )
        )
    return out, excluded


def ols_simple(
    x: Sequence[float] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    weights: Optional[Sequence[float] | np.ndarray] = None,
) -> OlsFit:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape:
        raise ValidationError("x and y differ in length")
    if xa.size < 2:
        raise ValidationError("regression needs at least 2 points")
    w = np.ones_like(xa) if weights is None else np.asarray(weights, dtype=float)
    if np.all(xa == xa[0]):
        raise ValidationError("x is constant; slope is undefined")
    sw = math.fsum(w)
    xm = math.fsum(w * xa) / sw
    ym = math.fsum(w * ya) / sw
    dx, dy = xa - xm, ya - ym
    sxx = math.fsum(w * dx * dx)
    sxy = math.fsum(w * dx * dy)
    slope = sxy / sxx
    intercept = ym - slope * xm
    ss_tot = math.fsum(w * dy * dy)
    if ss_tot == 0.0:
        return OlsFit(slope, intercept, 0.0, int(xa.size))
    resid = ya - (intercept + slope * xa)
    r2 = 1.0 - math.fsum(w * resid * resid) / ss_tot
    return OlsFit(slope, intercept, min(1.0, max(0.0, r2)), int(xa.size))


def audit_report(
    records: Iterable[AuditRecord],
    sdoh_table: SdohTable,
    weighted: bool = False,
    permutations: int = 20,
    seed: int = 0,
) -> AuditReport:
    aggs, excluded = zip_aggregate(records, sdoh_table)
    if len(aggs) < 2:
        raise ValidationError(f"audit needs at least 2 zips, got {len(aggs)}")
    x = np.array([a.minority_fraction for a in aggs])
    s = np.array([a.mean_score for a in aggs])
    c = np.array([a.mean_annual_cost for a in aggs])
    w = np.array([a.n_members for a in aggs], dtype=float) if weighted else None
    score_fit = ols_simple(x, s, w)
    cost_fit = ols_simple(x, c, w)

    rng = np.random.default_rng(seed)
    null = []
    for _ in range(permutations):
        xp = rng.permutation(x)
        if np.all(xp == xp[0]):
            continue
        null.append(ols_simple(xp, s, w).r_squared)
    logger.info(
        "[OK] audit zips=%d excluded=%d score R2=%.4f cost slope=%.2f",
        len(aggs), excluded, score_fit.r_squared, cost_fit.slope,
    )
    return AuditReport(tuple(aggs), excluded, score_fit, cost_fit, tuple(null), weighted)


def write_scatter(report: AuditReport, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(
        [(a.zip, a.n_members, a.mean_score, a.mean_annual_cost, a.minority_fraction) for a in report.aggregates],
        columns=list(SCATTER_COLUMNS),
    )
    df.to_csv(p, index=False, lineterminator="\n")
    return p


def plot_scatter(report: AuditReport, path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    x = [100.0 * a.minority_fraction for a in report.aggregates]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].scatter(x, [a.mean_score for a in report.aggregates], s=8)
    axes[0].set_xlabel("minority population (%)")
    axes[0].set_ylabel("mean score")
    axes[0].set_title(f"R2 = {report.score_fit.r_squared:.3f}")
    axes[1].scatter(x, [a.mean_annual_cost for a in report.aggregates], s=8)
    axes[1].set_xlabel("minority population (%)")
    axes[1].set_ylabel("mean annual cost ($)")
    axes[1].set_title(f"slope = {report.cost_fit.slope / 100.0:.2f} $/pp")
    fig.tight_layout()
    fig.savefig(p, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return p
