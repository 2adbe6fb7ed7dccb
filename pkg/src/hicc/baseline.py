from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression

from .errors import SchemaMismatchError, TrainingError
from .features import FeatureMatrix

logger = logging.getLogger(__name__)

BASELINE_FEATURE = "ALLWD_AMT_CURRENT_YEAR"


@dataclass(frozen=True)
class PriorCostBaseline:
    """Logistic regression on log1p of reporting-period cost."""

    coef: float
    intercept: float
    feature: str = BASELINE_FEATURE

    def _x(self, matrix: FeatureMatrix) -> np.ndarray:
        if self.feature not in matrix.names:
            raise SchemaMismatchError(f"baseline needs feature {self.feature}")
        x = np.nan_to_num(matrix.column(self.feature), nan=0.0)
        return np.log1p(np.maximum(x, 0.0))

    def predict(self, matrix: FeatureMatrix) -> np.ndarray:
        z = self.coef * self._x(matrix) + self.intercept
        return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def fit_baseline(matrix: FeatureMatrix, labels: np.ndarray, feature: str = BASELINE_FEATURE) -> PriorCostBaseline:
    y = np.asarray(labels).astype(int)
    if y.min() == y.max():
        raise TrainingError("baseline needs both classes")
    unfit = PriorCostBaseline(0.0, 0.0, feature)
    x = unfit._x(matrix)[:, None]
    lr = LogisticRegression(C=1e6, solver="lbfgs", max_iter=1000)
    lr.fit(x, y)
    model = PriorCostBaseline(float(lr.coef_[0, 0]), float(lr.intercept_[0]), feature)
    logger.info("[OK] baseline coef=%.4f intercept=%.4f", model.coef, model.intercept)
    return model
