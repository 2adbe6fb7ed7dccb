"""
Conventional rule-based HiCC identification: YAML rules over a member's feature
values and reporting-period codes. Each firing rule adds risk points; the
program enrolls the highest-point members up to capacity.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence

import numpy as np
import yaml

from .catalog import CATEGORY_FIELDS
from .claims import MemberRecord, PeriodPair
from .codes import normalize_code
from .errors import ConfigError

CLAUSES = ("feature_gte", "feature_lte", "has_code", "has_code_prefix")

Codes = Mapping[str, FrozenSet[str]]


@dataclass(frozen=True)
class RuleHit:
    name: str
    label: str
    message: str
    points: float = 0.0


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def load_rules(path: str | Path) -> List[Dict[str, Any]]:
    """
    Load rules from YAML. Accepts a root `{rules: [...]}` or a bare list; every
    clause must be one of the known kinds.
    """
    p = Path(path)
    _require(p.exists(), f"rules file not found: {p}")
    data = yaml.safe_load(p.read_text(encoding="utf-8"))
    if data is None:
        return []
    rules = data["rules"] if isinstance(data, dict) and "rules" in data else data
    _require(isinstance(rules, list), f"invalid format in {p}: expected a list of rules or a mapping with 'rules'")

    out: List[Dict[str, Any]] = []
    for r in rules:
        _require(isinstance(r, dict), f"invalid rule (not a mapping): {r} ({p})")
        when = r.get("when", {}) or {}
        for group in ("all", "any"):
            for clause in when.get(group, []) or []:
                _require(isinstance(clause, dict) and len(clause) == 1 and next(iter(clause)) in CLAUSES,
                         f"rule {r.get('name')!r}: unknown clause {clause} ({p})")
                kind, arg = next(iter(clause.items()))
                _require(isinstance(arg, dict), f"rule {r.get('name')!r}: {kind} needs a mapping argument ({p})")
                if kind.startswith("feature_"):
                    _require("feature" in arg and "value" in arg,
                             f"rule {r.get('name')!r}: {kind} needs feature and value ({p})")
                if kind.startswith("has_code"):
                    _require(arg.get("field") in CATEGORY_FIELDS,
                             f"rule {r.get('name')!r}: field must be one of {CATEGORY_FIELDS} ({p})")
                    arg["value"] = normalize_code(str(arg.get("value", "")))
        out.append(r)
    return out


def member_codes(member: MemberRecord, periods: PeriodPair) -> Dict[str, FrozenSet[str]]:
    """Distinct reporting-period codes per claim field."""
    report = [c for c in member.claims if periods.report_start <= c.service_date <= periods.report_end]
    return {f: frozenset(getattr(c, f) for c in report if getattr(c, f)) for f in CATEGORY_FIELDS}


def _feature(values: Mapping[str, Optional[float]], name: str) -> Optional[float]:
    return values.get(name)


def apply_rules(
    rules: Sequence[Dict[str, Any]],
    values: Mapping[str, Optional[float]],
    codes: Optional[Codes] = None,
) -> List[RuleHit]:
    codes = codes or {}
    hits: List[RuleHit] = []

    def eval_clause(clause: Dict[str, Any]) -> bool:
        if "feature_gte" in clause:
            v = _feature(values, clause["feature_gte"]["feature"])
            return v is not None and v >= float(clause["feature_gte"]["value"])
        if "feature_lte" in clause:
            v = _feature(values, clause["feature_lte"]["feature"])
            return v is not None and v <= float(clause["feature_lte"]["value"])
        if "has_code" in clause:
            arg = clause["has_code"]
            return arg["value"] in codes.get(arg["field"], frozenset())
        if "has_code_prefix" in clause:
            arg = clause["has_code_prefix"]
            return any(c.startswith(arg["value"]) for c in codes.get(arg["field"], frozenset()))
        return False

    for r in rules:
        rname = str(r.get("name", "unnamed_rule"))
        when = r.get("when", {}) or {}
        then = r.get("then", {}) or {}

        ok_all = True
        if "all" in when:
            ok_all = all(eval_clause(c) for c in (when["all"] or []))
        ok_any = True
        if "any" in when:
            ok_any = any(eval_clause(c) for c in (when["any"] or []))

        if ok_all and ok_any:
            hits.append(
                RuleHit(
                    name=rname,
                    label=str(then.get("label", rname)),
                    message=str(then.get("message", "")),
                    points=float(then.get("points", 1.0)),
                )
            )
    return hits


def risk_points(hits: Sequence[RuleHit]) -> float:
    return float(sum(h.points for h in hits))


def rule_selection(points: Sequence[float] | np.ndarray, capacity: int) -> np.ndarray:
    """Indices of the top-`capacity` flagged members (points > 0), ties kept in input order."""
    pts = np.asarray(points, dtype=float)
    flagged = np.flatnonzero(pts > 0)
    order = flagged[np.argsort(-pts[flagged], kind="stable")]
    return order[:capacity]


def rule_precision(points: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray, capacity: int) -> Optional[float]:
    chosen = rule_selection(points, capacity)
    if chosen.size == 0:
        return None
    return float(np.asarray(labels, dtype=bool)[chosen].mean())
