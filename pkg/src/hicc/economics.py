"""
Care-management economics: program cost, averted HiCC cost and net savings for a
fixed enrollment capacity. Currency is computed in Decimal and rounded to whole
dollars half away from zero; first-year effects only.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .evalkit import top_k_positives

_DOLLAR = Decimal(1)


def _dec(x: float | int) -> Decimal:
    return Decimal(str(x))


def round_half_away(x: Decimal) -> int:
    return int(x.quantize(_DOLLAR, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ScenarioParams:
    population: int = 1_000_000
    hicc_rate: float = 0.0016
    mean_hicc_cost: float = 413_975.0
    intervention_cost: float = 10_000.0
    reduction: float = 0.15
    capacity: int = 500
    precision: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("hicc_rate", "reduction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must be in [0,1], got {v}")
        if self.precision is not None and not (0.0 <= self.precision <= 1.0):
            raise ValidationError(f"precision must be in [0,1], got {self.precision}")
        if self.capacity < 0 or self.capacity > self.population:
            raise ValidationError(f"capacity {self.capacity} must be within [0, population={self.population}]")
        if self.mean_hicc_cost < 0 or self.intervention_cost < 0:
            raise ValidationError("costs must be nonnegative")


@dataclass(frozen=True)
class ScenarioResult:
    label: str
    enrollees: int
    precision: float
    program_cost: int
    true_hiccs: int
    cost_per_hicc: Optional[int]
    total_savings: int
    net_savings: int


def run_scenario(
    params: ScenarioParams,
    scores: Optional[Sequence[float] | np.ndarray] = None,
    labels: Optional[Sequence[int] | np.ndarray] = None,
    label: str = "",
) -> ScenarioResult:
    """Precision comes from params, or else from the top-`capacity` members of a scored cohort."""
    k = params.capacity
    if params.precision is not None:
        precision = params.precision
        true_hiccs = round_half_away(_dec(k) * _dec(precision))
    elif scores is not None and labels is not None:
        true_hiccs = top_k_positives(scores, labels, k) if k > 0 else 0
        precision = true_hiccs / k if k > 0 else 0.0
    else:
        raise ValidationError("scenario needs a precision or a scored cohort")

    program_cost = _dec(k) * _dec(params.intervention_cost)
    savings = _dec(true_hiccs) * _dec(params.mean_hicc_cost) * _dec(params.reduction)
    cost_per_hicc = None
    if true_hiccs > 0:
        cost_per_hicc = int((program_cost / _dec(true_hiccs)).quantize(_DOLLAR, rounding=ROUND_DOWN))
    return ScenarioResult(
        label=label,
        enrollees=k,
        precision=float(precision),
        program_cost=round_half_away(program_cost),
        true_hiccs=true_hiccs,
        cost_per_hicc=cost_per_hicc,
        total_savings=round_half_away(savings),
        net_savings=round_half_away(savings - program_cost),
    )


def break_even_precision(params: ScenarioParams) -> float:
    """Precision at which net savings are zero."""
    value = params.reduction * params.mean_hicc_cost
    if value <= 0:
        raise ValidationError("reduction x mean_hicc_cost must be positive")
    return params.intervention_cost / value


@dataclass(frozen=True)
class SweepRow:
    capacity: int
    program: str
    eligible: int
    precision: float
    true_hiccs: int


def capacity_sweep(
    programs: Mapping[str, Tuple[Sequence[float] | np.ndarray, Sequence[int] | np.ndarray]],
    capacities: Sequence[int],
) -> List[SweepRow]:
    """Precision@capacity and true-HiCC counts per program; capacities beyond a program's size are clipped."""
    caps = list(capacities)
    if any(c <= 0 for c in caps):
        raise ValidationError("capacities must be positive")
    if caps != sorted(caps):
        raise ValidationError("capacities must be ascending")
    rows: List[SweepRow] = []
    for cap in caps:
        for program, (scores, labels) in programs.items():
            n = len(scores)
            k = min(cap, n)
            hits = top_k_positives(scores, labels, k) if k > 0 else 0
            rows.append(SweepRow(cap, program, n, hits / k if k > 0 else 0.0, hits))
    return rows


def capacity_sweep_from_precision(precision_at: Mapping[int, float], program: str = "all") -> List[SweepRow]:
    """Same table from a known precision curve (capacity -> precision)."""
    rows = []
    for cap in sorted(precision_at):
        p = precision_at[cap]
        rows.append(SweepRow(cap, program, cap, p, round_half_away(_dec(cap) * _dec(p))))
    return rows
