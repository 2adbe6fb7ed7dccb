from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ValidationError

CALIBRATOR_MAGIC = "HICC-ISOTONIC"
RANK_BLEND = 1e-6


def pav(values: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Weighted pool-adjacent-violators; returns the nondecreasing fit per input position."""
    means: List[float] = []
    wts: List[float] = []
    sizes: List[int] = []
    for v, w in zip(values, weights):
        means.append(float(v))
        wts.append(float(w))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w2 = wts[-2] + wts[-1]
            m2 = (means[-2] * wts[-2] + means[-1] * wts[-1]) / w2
            n2 = sizes[-2] + sizes[-1]
            del means[-1], wts[-1], sizes[-1]
            means[-1], wts[-1], sizes[-1] = m2, w2, n2
    return np.repeat(np.asarray(means), sizes)


@dataclass(frozen=True)
class Calibrator:
    """
    Isotonic step map from raw score to probability. Applied values blend a small
    share of the raw score into the step so the map is strictly increasing and
    never merges distinct scores into ties.
    """

    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]
    rank_blend: float = RANK_BLEND

    def __post_init__(self) -> None:
        if len(self.breakpoints) != len(self.values) or not self.breakpoints:
            raise ValidationError("calibrator needs matching, non-empty breakpoints and values")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValidationError("calibrator breakpoints must be strictly increasing")
        if any(v2 < v1 for v1, v2 in zip(self.values, self.values[1:])):
            raise ValidationError("calibrator values must be nondecreasing")

    def step(self, scores: Sequence[float] | np.ndarray) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(np.asarray(self.breakpoints), s, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return np.asarray(self.values)[idx]

    def apply_array(self, scores: Sequence[float] | np.ndarray) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        out = (1.0 - self.rank_blend) * self.step(s) + self.rank_blend * s
        return np.clip(out, 0.0, 1.0)

    def apply(self, score: float) -> float:
        return float(self.apply_array([score])[0])


def fit_isotonic(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray, rank_blend: float = RANK_BLEND) -> Calibrator:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.size == 0:
        raise ValidationError("cannot fit a calibrator on empty input")
    if s.shape != y.shape:
        raise ValidationError("scores and labels differ in length")
    distinct, inverse = np.unique(s, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    means = np.bincount(inverse, weights=y) / counts
    fitted = pav(means, counts)
    return Calibrator(tuple(float(x) for x in distinct), tuple(float(x) for x in fitted), rank_blend)


def save_calibrator(cal: Calibrator, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "magic": CALIBRATOR_MAGIC,
        "breakpoints": list(cal.breakpoints),
        "values": list(cal.values),
        "rank_blend": cal.rank_blend,
    }
    p.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    return p


def load_calibrator(path: str | Path) -> Calibrator:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"calibrator file not found: {p}")
    doc = json.loads(p.read_text(encoding="utf-8"))
    if doc.get("magic") != CALIBRATOR_MAGIC:
        raise ValidationError(f"{p} is not a calibrator file")
    return Calibrator(tuple(doc["breakpoints"]), tuple(doc["values"]), float(doc["rank_blend"]))
