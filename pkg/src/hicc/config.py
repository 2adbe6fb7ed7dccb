from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .claims import HICC_THRESHOLD, PeriodPair
from .economics import ScenarioParams
from .gbdt import Hyperparams
from .synthgen import GenParams

REPO_ROOT = Path(__file__).resolve().parents[2]

SEED_STREAMS = ("generate", "split", "downsample", "select", "permutation")


def sub_seed(seed: int, name: str) -> int:
    """64-bit seed for a named stream; streams never share state."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class Paths:
    workdir: Path
    catalog: Path = REPO_ROOT / "config" / "catalog.yaml"
    life_table: Path = REPO_ROOT / "data" / "life_table.csv"
    condition_weights: Path = REPO_ROOT / "data" / "condition_weights.csv"
    sdoh_schema: Path = REPO_ROOT / "data" / "sdoh_schema.yaml"
    rules: Path = REPO_ROOT / "rules" / "rules.yaml"
    claims: Optional[Path] = None
    enrollment: Optional[Path] = None
    members: Optional[Path] = None
    sdoh: Optional[Path] = None

    @property
    def data_dir(self) -> Path:
        return self.workdir / "data"

    @property
    def reports(self) -> Path:
        return self.workdir / "reports"

    def input_file(self, name: str) -> Path:
        explicit = getattr(self, name)
        return explicit if explicit is not None else self.data_dir / f"{name}.csv"

    @property
    def features(self) -> Path:
        return self.workdir / "features.csv"

    @property
    def cohort(self) -> Path:
        return self.workdir / "cohort.csv"

    @property
    def model(self) -> Path:
        return self.workdir / "model.json"

    @property
    def calibrator(self) -> Path:
        return self.workdir / "calibrator.json"

    @property
    def scores(self) -> Path:
        return self.workdir / "scores.csv"

    @property
    def pruned_catalog(self) -> Path:
        return self.workdir / "catalog_pruned.yaml"


@dataclass(frozen=True)
class TrainSettings:
    downsample_target: int = 0
    learning_rates: Tuple[float, ...] = (0.05,)
    fractions: Tuple[float, ...] = (0.16, 0.32, 0.64)
    selection_fraction: float = 0.2
    calibration_fraction: float = 0.2
    holdout_fraction: float = 0.2
    prune_keep_k: int = 0
    permutation_repeats: int = 0
    baseline: bool = True


@dataclass(frozen=True)
class EvalSettings:
    thresholds: Tuple[float, ...] = (0.5, 0.6, 0.7, 0.76, 0.8, 0.9, 1.0)
    emergent_threshold: float = 0.76
    recurrent_threshold: float = 0.92
    top_k: int = 1000
    capacities: Tuple[int, ...] = (300, 500, 1000)
    rule_precision: float = 0.02
    audit_weighted: bool = False
    audit_plot: bool = False
    audit_permutations: int = 20


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    periods: PeriodPair
    paths: Paths
    workers: int = 1
    threshold: float = HICC_THRESHOLD
    generate: GenParams = field(default_factory=GenParams)
    model: Hyperparams = field(default_factory=Hyperparams)
    train: TrainSettings = field(default_factory=TrainSettings)
    economics: ScenarioParams = field(default_factory=ScenarioParams)
    evaluate: EvalSettings = field(default_factory=EvalSettings)
    source: Optional[Path] = None

    def stream(self, name: str) -> int:
        return sub_seed(self.seed, name)
