from __future__ import annotations

from dataclasses import fields, replace
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
import yaml

from .catalog import CATEGORY_FIELDS, FeatureCatalog, FeatureDef, LifeTable
from .claims import Gender, PeriodPair
from .codes import normalize_code, normalize_codes
from .config import REPO_ROOT, EvalSettings, Paths, PipelineConfig, TrainSettings, sub_seed
from .economics import ScenarioParams
from .errors import ConfigError, ValidationError
from .gbdt import Hyperparams
from .synthgen import GenParams


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _read_yaml(path: str | Path) -> Any:
    p = Path(path)
    _require(p.exists(), f"file not found: {p}")
    try:
        return yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {p}: {exc}") from exc


# ----------------------------- SDOH schema -----------------------------

def load_sdoh_schema(path: str | Path) -> Tuple[str, ...]:
    p = Path(path)
    doc = _read_yaml(p)
    _require(isinstance(doc, dict), f"invalid YAML: root must be a mapping ({p})")
    names = doc.get("indicators")
    _require(isinstance(names, list) and all(isinstance(x, str) for x in names),
             f"'indicators' must be a list of strings ({p})")
    _require("minority_fraction" in names, f"SDOH schema must include minority_fraction ({p})")
    _require(len(set(names)) == len(names), f"duplicate SDOH indicator names ({p})")
    return tuple(names)


def sdoh_feature_name(indicator: str) -> str:
    return f"SDOH_{indicator.upper()}"


# ----------------------------- catalog -----------------------------

def load_catalog(path: str | Path, sdoh_indicators: Optional[Sequence[str]] = None) -> FeatureCatalog:
    """
    Load a feature catalog. An entry `{family: sdoh, expand: schema}` expands into one
    feature per indicator of the catalog's `sdoh_schema` file (or `sdoh_indicators`).
    """
    p = Path(path)
    doc = _read_yaml(p)
    _require(isinstance(doc, dict), f"invalid YAML: root must be a mapping ({p})")

    name = doc.get("name")
    version = doc.get("version", "1")
    entries = doc.get("features")
    lists = doc.get("code_lists", {}) or {}
    _require(isinstance(name, str) and name.strip(), f"catalog without a valid 'name' ({p})")
    _require(isinstance(entries, list) and entries, f"catalog 'features' must be a non-empty list ({p})")
    _require(isinstance(lists, dict), f"catalog 'code_lists' must be a mapping ({p})")

    code_lists = {}
    for k, v in lists.items():
        _require(isinstance(v, list), f"code_lists['{k}'] must be a list ({p})")
        code_lists[str(k)] = normalize_codes(str(x) for x in v)

    features: List[FeatureDef] = []
    for i, e in enumerate(entries):
        _require(isinstance(e, dict), f"features[{i}] must be a mapping ({p})")
        family = e.get("family")
        _require(isinstance(family, str), f"features[{i}] lacks 'family' ({p})")
        if family == "sdoh" and e.get("expand") == "schema":
            indicators = sdoh_indicators
            if indicators is None:
                schema = doc.get("sdoh_schema")
                _require(isinstance(schema, str), f"catalog expands SDOH but names no 'sdoh_schema' ({p})")
                indicators = load_sdoh_schema((p.parent / schema).resolve())
            features.extend(FeatureDef(sdoh_feature_name(n), "sdoh", {"indicator": n}) for n in indicators)
            continue
        fname = e.get("name")
        _require(isinstance(fname, str) and fname.strip(), f"features[{i}] lacks 'name' ({p})")
        params = {k: v for k, v in e.items() if k not in ("name", "family")}
        if family == "category":
            fld = params.get("field")
            _require(fld in CATEGORY_FIELDS, f"feature {fname}: field must be one of {CATEGORY_FIELDS} ({p})")
            if "codes" in params:
                params["codes"] = sorted(normalize_codes(str(c) for c in params["codes"]))
            if "prefixes" in params:
                params["prefixes"] = [normalize_code(str(c)) for c in params["prefixes"]]
        features.append(FeatureDef(fname, family, params))

    try:
        return FeatureCatalog(name=name, version=str(version), features=tuple(features), code_lists=code_lists)
    except ValidationError as exc:
        raise ConfigError(f"{exc} ({p})") from exc


def write_catalog(catalog: FeatureCatalog, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(yaml.safe_dump(catalog.to_doc(), sort_keys=False, allow_unicode=True), encoding="utf-8")
    return p


# ----------------------------- life table -----------------------------

def load_life_table(life_path: str | Path, weights_path: str | Path) -> LifeTable:
    lp, wp = Path(life_path), Path(weights_path)
    _require(lp.exists(), f"file not found: {lp}")
    _require(wp.exists(), f"file not found: {wp}")
    life = pd.read_csv(lp, dtype={"gender": str})
    _require({"age", "gender", "remaining_expectancy"} <= set(life.columns),
             f"life table needs columns age,gender,remaining_expectancy ({lp})")
    weights = pd.read_csv(wp, dtype={"condition_code": str})
    _require({"condition_code", "years_lost"} <= set(weights.columns),
             f"condition weights need columns condition_code,years_lost ({wp})")

    expectancy: Dict[Gender, Tuple[Tuple[int, float], ...]] = {}
    for g in Gender:
        rows = life[life["gender"].str.upper() == g.value].sort_values("age")
        expectancy[g] = tuple((int(a), float(e)) for a, e in zip(rows["age"], rows["remaining_expectancy"]))
    years_lost: Dict[str, float] = {}
    for code, w in zip(weights["condition_code"], weights["years_lost"]):
        key = normalize_code(code)
        _require(key is not None, f"empty condition_code in {wp}")
        years_lost[key] = float(w)  # type: ignore[index]
    try:
        return LifeTable(expectancy=expectancy, years_lost=years_lost)
    except ValidationError as exc:
        raise ConfigError(f"{exc} ({lp})") from exc


# ----------------------------- pipeline config -----------------------------

REQUIRED_KEYS = ("seed", "periods.report_start", "periods.report_end", "paths.workdir")
TOP_LEVEL_KEYS = ("seed", "workers")
SECTION_KEYS: Dict[str, Tuple[str, ...]] = {
    "periods": ("report_start", "report_end", "threshold"),
    "paths": tuple(f.name for f in fields(Paths)),
    "generate": tuple(
        f.name for f in fields(GenParams) if f.name not in ("seed", "report_start", "threshold")
    ),
    "model": tuple(f.name for f in fields(Hyperparams)),
    "train": tuple(f.name for f in fields(TrainSettings)),
    "economics": tuple(f.name for f in fields(ScenarioParams)),
    "evaluate": tuple(f.name for f in fields(EvalSettings)),
}


def _get(doc: Mapping[str, Any], dotted: str) -> Any:
    node: Any = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node or node[part] is None:
            return None
        node = node[part]
    return node


def apply_overrides(doc: Dict[str, Any], overrides: Mapping[str, str], source: str = "<cli>") -> Dict[str, Any]:
    """
    Set `section.key` (or an unambiguous bare `key`) from command-line strings; values
    are parsed as YAML scalars and coerced later to the type of the default.
    """
    for raw_key, raw_value in overrides.items():
        key = raw_key.replace("-", "_")
        value = yaml.safe_load(raw_value) if isinstance(raw_value, str) else raw_value
        if "." in key:
            section, leaf = key.split(".", 1)
            _require(section in SECTION_KEYS and leaf in SECTION_KEYS[section],
                     f"unknown config key '{key}' ({source})")
        elif key in TOP_LEVEL_KEYS:
            doc[key] = value
            continue
        else:
            owners = [s for s, keys in SECTION_KEYS.items() if key in keys]
            _require(len(owners) > 0, f"unknown config key '{key}' ({source})")
            _require(len(owners) == 1, f"ambiguous config key '{key}': use one of "
                     + ", ".join(f"{s}.{key}" for s in owners))
            section, leaf = owners[0], key
        block = doc.setdefault(section, {}) or {}
        doc[section] = block
        block[leaf] = value
    return doc


def _as_date(value: Any, key: str, source: Path) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"config key '{key}' must be an ISO date, got {value!r} ({source})") from exc


def _coerce(value: Any, default: Any, key: str, source: Path) -> Any:
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = value if isinstance(value, (list, tuple)) else [value]
            if default and isinstance(default[0], tuple):
                return tuple(tuple(x) for x in items)
            kind = type(default[0]) if default else float
            return tuple(kind(x) for x in items)
        if isinstance(default, Path) or default is None:
            return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key '{key}' has invalid value {value!r} ({source})") from exc
    return value


def _section_values(doc: Mapping[str, Any], section: str, defaults: Any, source: Path) -> Dict[str, Any]:
    block = doc.get(section, {}) or {}
    _require(isinstance(block, dict), f"config section '{section}' must be a mapping ({source})")
    unknown = sorted(set(block) - set(SECTION_KEYS[section]))
    _require(not unknown, f"unknown config keys in '{section}': {unknown} ({source})")
    out = {}
    for k, v in block.items():
        if v is None:
            continue
        out[k] = _coerce(v, getattr(defaults, k, None), f"{section}.{k}", source)
    return out


def _resolve(base: Path, value: Any) -> Path:
    p = Path(str(value)).expanduser()
    return p if p.is_absolute() else (base / p).resolve()


def load_config(path: str | Path, overrides: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    p = Path(path)
    doc = _read_yaml(p)
    _require(isinstance(doc, dict), f"invalid YAML: root must be a mapping ({p})")
    if overrides:
        apply_overrides(doc, overrides, str(p))
    for key in REQUIRED_KEYS:
        _require(_get(doc, key) is not None, f"missing config key '{key}' in {p}")

    try:
        seed = int(doc["seed"])
        workers = int(doc.get("workers", 1) or 1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed and workers must be integers ({p})") from exc
    _require(workers >= 1, f"workers must be >= 1 ({p})")

    periods_doc = doc["periods"]
    try:
        periods = PeriodPair.from_report(
            _as_date(periods_doc["report_start"], "periods.report_start", p),
            _as_date(periods_doc["report_end"], "periods.report_end", p),
        )
    except ValidationError as exc:
        raise ConfigError(f"{exc} ({p})") from exc
    threshold = float(periods_doc.get("threshold", 250_000.0))
    _require(threshold > 0, f"periods.threshold must be positive ({p})")

    base = p.parent
    raw_paths = _section_values(doc, "paths", None, p)
    paths = Paths(**{k: _resolve(base, v) for k, v in raw_paths.items()})

    gen_values = _section_values(doc, "generate", GenParams(), p)
    if "condition_mix" in gen_values:
        mix = doc["generate"]["condition_mix"]
        if isinstance(mix, dict):
            gen_values["condition_mix"] = tuple((str(k), float(v)) for k, v in mix.items())
    try:
        generate = GenParams(
            seed=sub_seed(seed, "generate"),
            report_start=periods.report_start,
            threshold=threshold,
            **gen_values,
        )
        model = Hyperparams(**_section_values(doc, "model", Hyperparams(), p))
        economics = ScenarioParams(**_section_values(doc, "economics", ScenarioParams(), p))
    except (ValidationError, TypeError) as exc:
        raise ConfigError(f"{exc} ({p})") from exc
    train = TrainSettings(**_section_values(doc, "train", TrainSettings(), p))
    evaluate = EvalSettings(**_section_values(doc, "evaluate", EvalSettings(), p))
    _require(train.holdout_fraction + train.calibration_fraction < 1.0,
             f"train.holdout_fraction + train.calibration_fraction must be < 1 ({p})")
    _require(len(train.learning_rates) >= 1, f"train.learning_rates must not be empty ({p})")

    return PipelineConfig(
        seed=seed,
        periods=periods,
        paths=paths,
        workers=workers,
        threshold=threshold,
        generate=generate,
        model=model,
        train=train,
        economics=economics,
        evaluate=evaluate,
        source=p,
    )


def with_workdir(cfg: PipelineConfig, workdir: str | Path) -> PipelineConfig:
    return replace(cfg, paths=replace(cfg.paths, workdir=Path(workdir)))


def default_config_path() -> Path:
    return REPO_ROOT / "config" / "small.yaml"
