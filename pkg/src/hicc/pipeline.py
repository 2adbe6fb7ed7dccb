"""
Pipeline stages. Each stage reads the artifacts of the stages before it from
`paths.workdir`, writes its own, and returns the paths it wrote:

    generate -> featurize -> train -> calibrate -> score -> evaluate -> economics -> audit
"""
from __future__ import annotations

import logging
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .baseline import fit_baseline
from .calibration import Calibrator, fit_isotonic, load_calibrator, save_calibrator
from .claims import AgeBand, CohortTags, Gender, MemberStore, SdohTable, assemble_cohort, ingest_dataset, read_sdoh
from .config import PipelineConfig
from .economics import ScenarioParams, break_even_precision, capacity_sweep, run_scenario
from .errors import SchemaMismatchError, TrainingError, ValidationError
from .evalkit import (
    ScoredMember,
    auc_score,
    brier_score,
    fmt_num,
    fmt_pct,
    pr_auc,
    precision_at_k,
    program_members,
    roc_auc,
    stratified_report,
    threshold_agreement,
)
from .fairness import AuditRecord, audit_report, plot_scatter, write_scatter
from .features import FeatureBuilder, FeatureMatrix, read_matrix, write_matrix
from .gbdt import BoostedModel, fit, load_model, predict_matrix, save_model, split_importance
from .loaders import load_catalog, load_life_table, load_sdoh_schema, write_catalog
from .reports import (
    pr_frame,
    render_audit,
    render_savings,
    render_stratified,
    render_summary,
    render_sweep,
    render_thresholds,
    roc_frame,
    savings_frame,
    stratified_frame,
    sweep_frame,
    threshold_frame,
    threshold_rows,
    write_frame,
    write_text,
)
from .rules_engine import apply_rules, load_rules, member_codes, risk_points, rule_precision
from .selection import candidate_grid, downsample, permutation_importance, prune_features, staged_select, stratified_split
from .synthgen import generate_population, validate_generated

logger = logging.getLogger(__name__)

COHORT_COLUMNS = (
    "member_id", "split", "label_hicc", "predict_total", "recurrent", "age_band", "gender",
    "has_pharmacy_benefit", "full_year_enrolled", "zip", "rule_points",
)
SPLITS = ("train", "calibration", "holdout")


def _wrote(paths: Sequence[Path]) -> List[Path]:
    for p in paths:
        logger.info("[OK] wrote %s", p)
    return list(paths)


# ----------------------------- shared inputs -----------------------------

def _indicators(cfg: PipelineConfig) -> Tuple[str, ...]:
    return load_sdoh_schema(cfg.paths.sdoh_schema)


def _ingest(cfg: PipelineConfig) -> Tuple[MemberStore, SdohTable]:
    paths = cfg.paths
    members = paths.input_file("members")
    return ingest_dataset(
        paths.input_file("claims"),
        paths.input_file("enrollment"),
        paths.input_file("sdoh"),
        members if members.exists() else None,
        _indicators(cfg),
    )


def read_cohort(path: str | Path) -> pd.DataFrame:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"cohort file not found: {p} (run featurize first)")
    return pd.read_csv(
        p,
        dtype={"member_id": str, "split": str, "zip": str, "gender": str, "age_band": str},
        keep_default_na=False,
    )


def read_scores(path: str | Path) -> pd.DataFrame:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"scores file not found: {p} (run score first)")
    df = pd.read_csv(p, dtype={"member_id": str})
    if list(df.columns) != ["member_id", "score"]:
        raise ValidationError(f"scores file {p} must have columns member_id,score")
    return df


def _aligned(cfg: PipelineConfig) -> Tuple[FeatureMatrix, pd.DataFrame]:
    matrix = read_matrix(cfg.paths.features)
    cohort = read_cohort(cfg.paths.cohort)
    if tuple(cohort["member_id"]) != matrix.member_ids:
        raise SchemaMismatchError(f"{cfg.paths.cohort} and {cfg.paths.features} list different members")
    return matrix, cohort


def _split_rows(cohort: pd.DataFrame, split: str) -> np.ndarray:
    return np.flatnonzero(cohort["split"].to_numpy() == split)


def _scored_cohort(cfg: PipelineConfig) -> pd.DataFrame:
    cohort = read_cohort(cfg.paths.cohort)
    scores = read_scores(cfg.paths.scores)
    return cohort.merge(scores, on="member_id", how="inner", validate="one_to_one")


def _tags(row: pd.Series) -> CohortTags:
    return CohortTags(
        eligible=True,
        label_hicc=bool(row["label_hicc"]),
        predict_total=float(row["predict_total"]),
        recurrent=bool(row["recurrent"]),
        age_band=AgeBand(row["age_band"]),
        has_pharmacy_benefit=bool(row["has_pharmacy_benefit"]),
        full_year_enrolled=bool(row["full_year_enrolled"]),
        gender=Gender(row["gender"]) if row["gender"] else None,
    )


# ----------------------------- generate -----------------------------

def generate(cfg: PipelineConfig) -> List[Path]:
    dataset = generate_population(cfg.generate, cfg.paths.data_dir, _indicators(cfg), cfg.workers)
    report = validate_generated(dataset, cfg.generate)
    validation = write_text(report.render(), cfg.paths.reports / "generation_validation.txt")
    return _wrote([dataset.claims, dataset.enrollment, dataset.members, dataset.sdoh, dataset.manifest, validation])


# ----------------------------- featurize -----------------------------

def featurize(cfg: PipelineConfig) -> List[Path]:
    store, sdoh = _ingest(cfg)
    catalog = load_catalog(cfg.paths.catalog, sdoh.indicator_names)
    missing = catalog.missing_top20()
    if missing:
        logger.warning("[WARN] catalog lacks top-20 features: %s", ", ".join(missing))
    life = load_life_table(cfg.paths.life_table, cfg.paths.condition_weights)
    builder = FeatureBuilder(catalog, life, sdoh, cfg.periods)

    cohort = [(m, t) for m, t in assemble_cohort(store, cfg.periods, cfg.threshold) if t.eligible]
    if not cohort:
        raise ValidationError("no eligible members for the configured periods")
    members = [m for m, _ in cohort]
    matrix = builder.matrix(members, cfg.workers)

    labels = np.array([t.label_hicc for _, t in cohort], dtype=int)
    train_share = 1.0 - cfg.train.calibration_fraction - cfg.train.holdout_fraction
    parts = stratified_split(
        labels, (train_share, cfg.train.calibration_fraction, cfg.train.holdout_fraction), cfg.stream("split")
    )
    split = np.empty(len(cohort), dtype=object)
    for name, idx in zip(SPLITS, parts):
        split[idx] = name

    rules = load_rules(cfg.paths.rules)
    points = [
        risk_points(apply_rules(rules, matrix.row(i).values, member_codes(m, cfg.periods)))
        for i, m in enumerate(members)
    ]

    df = pd.DataFrame(
        [
            (m.member_id, split[i], int(t.label_hicc), t.predict_total, int(t.recurrent), t.age_band.value,
             t.gender.value if t.gender else "", int(t.has_pharmacy_benefit), int(t.full_year_enrolled),
             m.zip or "", points[i])
            for i, (m, t) in enumerate(cohort)
        ],
        columns=list(COHORT_COLUMNS),
    )
    features_path = write_matrix(matrix, cfg.paths.features)
    cohort_path = cfg.paths.cohort
    df.to_csv(cohort_path, index=False, float_format="%.2f", lineterminator="\n")
    logger.info(
        "[OK] cohort eligible=%d hicc=%d train/calibration/holdout=%s",
        len(df), int(labels.sum()), "/".join(str(len(p)) for p in parts),
    )
    return _wrote([features_path, cohort_path])


# ----------------------------- train -----------------------------

def train(cfg: PipelineConfig) -> List[Path]:
    matrix, cohort = _aligned(cfg)
    labels = cohort["label_hicc"].to_numpy(dtype=int)
    rows = _split_rows(cohort, "train")
    if cfg.train.downsample_target > 0:
        keep = downsample(labels[rows], cfg.train.downsample_target, cfg.stream("downsample"))
        rows = rows[keep]
        logger.info("[OK] downsampled training rows to %d (positives %d)", rows.size, int(labels[rows].sum()))
    train_matrix = matrix.take(rows)
    y = labels[rows]
    if y.min() == y.max():
        raise TrainingError("training split has a single class; raise the member count or the prevalence")

    written: List[Path] = []
    parent_schema: Optional[str] = None
    ranking: Optional[Tuple[Tuple[str, float], ...]] = None
    if cfg.train.prune_keep_k > 0:
        catalog = load_catalog(cfg.paths.catalog, _indicators(cfg))
        if catalog.schema_version != matrix.schema_version:
            raise SchemaMismatchError(
                f"catalog schema {catalog.schema_version} does not match features {matrix.schema_version}"
            )
        pruned = prune_features(
            train_matrix,
            y,
            lambda m, lab: fit(m, lab, cfg.model),
            cfg.train.prune_keep_k,
            catalog,
            repeats=cfg.train.permutation_repeats or 3,
            seed=cfg.stream("permutation"),
        )
        ranking = pruned.ranking
        if pruned.catalog is not catalog:
            parent_schema = matrix.schema_version
            train_matrix = train_matrix.select(pruned.catalog.names, pruned.catalog.schema_version)
            written.append(write_catalog(pruned.catalog, cfg.paths.pruned_catalog))

    result = staged_select(
        candidate_grid(cfg.model, cfg.train.learning_rates),
        train_matrix,
        y,
        cfg.train.fractions,
        seed=cfg.stream("select"),
        selection_fraction=cfg.train.selection_fraction,
        parent_schema=parent_schema,
    )
    model = result.model
    written.append(save_model(model, cfg.paths.model))

    importance = split_importance(model)
    order = sorted(importance, key=lambda n: -importance[n])
    written.append(write_frame(
        pd.DataFrame({"feature": order, "importance": [f"{importance[n]:.6f}" for n in order]}),
        cfg.paths.reports / "split_importance.csv",
    ))
    written.append(write_frame(
        pd.DataFrame(
            [(r.round, r.fraction, r.rows, r.candidate, r.learning_rate, fmt_num(r.auc, 6), int(r.survived))
             for r in result.rounds],
            columns=["round", "fraction", "rows", "candidate", "learning_rate", "auc", "survived"],
        ),
        cfg.paths.reports / "staged_selection.csv",
    ))

    if ranking is None and cfg.train.permutation_repeats > 0:
        cal = _split_rows(cohort, "calibration")
        perm = permutation_importance(
            model, matrix.take(cal), labels[cal], cfg.train.permutation_repeats, cfg.stream("permutation")
        )
        ranking = tuple(sorted(perm.items(), key=lambda kv: -kv[1]))
    if ranking is not None:
        written.append(write_frame(
            pd.DataFrame([(n, f"{v:.6f}") for n, v in ranking], columns=["feature", "importance"]),
            cfg.paths.reports / "permutation_importance.csv",
        ))
    logger.info("[OK] model trees=%d learning_rate=%g", len(model.trees), result.best.learning_rate)
    return _wrote(written)


# ----------------------------- calibrate -----------------------------

def calibrate(cfg: PipelineConfig) -> List[Path]:
    model = load_model(cfg.paths.model)
    matrix, cohort = _aligned(cfg)
    rows = _split_rows(cohort, "calibration")
    if rows.size == 0:
        raise ValidationError("calibration split is empty")
    raw = predict_matrix(model, matrix.take(rows))
    cal = fit_isotonic(raw, cohort["label_hicc"].to_numpy(dtype=int)[rows])
    logger.info("[OK] calibrator steps=%d", len(cal.breakpoints))
    return _wrote([save_calibrator(cal, cfg.paths.calibrator)])


# ----------------------------- score -----------------------------

def _score_block(model: BoostedModel, calibrator: Optional[Calibrator], values: np.ndarray, matrix: FeatureMatrix) -> np.ndarray:
    block = FeatureMatrix(tuple(str(i) for i in range(values.shape[0])), matrix.names, values, matrix.schema_version)
    raw = predict_matrix(model, block)
    return raw if calibrator is None else calibrator.apply_array(raw)


def score_matrix(
    model: BoostedModel,
    matrix: FeatureMatrix,
    calibrator: Optional[Calibrator] = None,
    workers: int = 1,
) -> np.ndarray:
    """Calibrated scores in matrix row order; the result does not depend on `workers`."""
    if not model.accepts(matrix.schema_version):
        raise SchemaMismatchError(
            f"feature schema {matrix.schema_version} does not match model schema {model.schema_version}"
        )
    n = len(matrix)
    if workers <= 1 or n < 2 * workers:
        return _score_block(model, calibrator, matrix.values, matrix)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    blocks = Parallel(n_jobs=workers)(
        delayed(_score_block)(model, calibrator, matrix.values[a:b], matrix)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    )
    return np.concatenate(blocks)


def score(cfg: PipelineConfig) -> List[Path]:
    model = load_model(cfg.paths.model)
    matrix = read_matrix(cfg.paths.features)
    calibrator = load_calibrator(cfg.paths.calibrator) if cfg.paths.calibrator.exists() else None
    if calibrator is None:
        logger.warning("[WARN] no calibrator at %s; writing raw model scores", cfg.paths.calibrator)
    t0 = time.perf_counter()
    scores = score_matrix(model, matrix, calibrator, cfg.workers)
    elapsed = max(time.perf_counter() - t0, 1e-9)
    logger.info("[OK] scored rows=%d throughput=%.0f rows/min", len(matrix), 60.0 * len(matrix) / elapsed)
    out = cfg.paths.scores
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"member_id": list(matrix.member_ids), "score": scores}).to_csv(
        out, index=False, float_format="%.17g", lineterminator="\n"
    )
    return _wrote([out])


# ----------------------------- evaluate -----------------------------

def evaluate(cfg: PipelineConfig) -> List[Path]:
    ev = cfg.evaluate
    df = _scored_cohort(cfg)
    hold = df[df["split"] == "holdout"]
    if hold.empty:
        raise ValidationError("holdout split is empty")
    s = hold["score"].to_numpy(dtype=float)
    y = hold["label_hicc"].to_numpy(dtype=int)
    reports = cfg.paths.reports
    written: List[Path] = []

    rows = threshold_rows(s, y, ev.thresholds)
    written.append(write_frame(threshold_frame(rows), reports / "threshold_metrics.csv"))
    written.append(write_text(render_thresholds(rows), reports / "threshold_metrics.txt"))

    roc_curve, auc_roc = roc_auc(s, y)
    pr_curve, auc_pr = pr_auc(s, y)
    written.append(write_frame(roc_frame(roc_curve), reports / "roc_curve.csv"))
    written.append(write_frame(pr_frame(pr_curve), reports / "pr_curve.csv"))

    scored = [ScoredMember(r["member_id"], float(r["score"]), _tags(r)) for _, r in hold.iterrows()]
    strata = stratified_report(scored, {"emergent": ev.emergent_threshold, "recurrent": ev.recurrent_threshold})
    written.append(write_frame(stratified_frame(strata), reports / "stratified.csv"))
    written.append(write_text(render_stratified(strata), reports / "stratified.txt"))

    k = min(ev.top_k, len(s))
    agreement = threshold_agreement(s, y)
    items = [
        ("holdout members", f"{len(s):,}"),
        ("holdout HiCCs", f"{int(y.sum()):,}"),
        ("AUC-ROC", fmt_pct(auc_roc)),
        ("AUC-PR", fmt_pct(auc_pr)),
        ("AUC-PR baseline (prevalence)", fmt_pct(float(y.mean()))),
        (f"precision at top {k:,}", fmt_pct(precision_at_k(s, y, k))),
        ("F1-optimal threshold", f"{agreement.f1.threshold:.4f} (F1 {agreement.f1.value:.4f})"),
        ("MCC-optimal threshold", f"{agreement.mcc.threshold:.4f} (MCC {agreement.mcc.value:.4f})"),
        ("F1/MCC threshold relative gap", fmt_pct(agreement.relative_gap)),
    ]
    for program in ("emergent", "recurrent"):
        members = program_members(scored, program)
        auc = auc_score([m.score for m in members], [m.tags.label_hicc for m in members]) if members else None
        items.append((f"{program} AUC-ROC", fmt_pct(auc)))

    matrix, cohort = _aligned(cfg)
    model = load_model(cfg.paths.model)
    index = {mid: i for i, mid in enumerate(matrix.member_ids)}
    hold_idx = np.array([index[m] for m in hold["member_id"]], dtype=int)
    raw = predict_matrix(model, matrix.take(hold_idx))
    items.append(("Brier score, raw model", f"{brier_score(raw, y):.6f}"))
    items.append(("Brier score, calibrated", f"{brier_score(s, y):.6f}"))

    if cfg.train.baseline:
        train_rows = _split_rows(cohort, "train")
        try:
            base = fit_baseline(matrix.take(train_rows), cohort["label_hicc"].to_numpy(dtype=int)[train_rows])
            base_auc = auc_score(base.predict(matrix.take(hold_idx)), y)
            items.append(("prior-cost logistic baseline AUC-ROC", fmt_pct(base_auc)))
            if base_auc is not None:
                items.append(("model minus baseline (AUC points)", f"{100.0 * (auc_roc - base_auc):.2f}"))
        except (TrainingError, SchemaMismatchError) as exc:
            logger.warning("[WARN] baseline skipped: %s", exc)

    points = hold["rule_points"].to_numpy(dtype=float)
    items.append((f"rule-based precision at top {k:,}", fmt_pct(rule_precision(points, y, k))))
    written.append(write_text(render_summary(items, "Holdout evaluation"), reports / "evaluation_summary.txt"))
    logger.info("[OK] holdout AUC-ROC=%.4f AUC-PR=%.4f", auc_roc, auc_pr)
    return _wrote(written)


# ----------------------------- economics -----------------------------

def scaled_capacity(capacity: int, cohort_size: int, population: int) -> int:
    """Enrollment slots a cohort of `cohort_size` gets when `population` members share `capacity` slots."""
    return max(1, min(cohort_size, int(round(capacity * cohort_size / population))))


def economics(cfg: PipelineConfig) -> List[Path]:
    params: ScenarioParams = cfg.economics
    df = _scored_cohort(cfg)
    hold = df[df["split"] == "holdout"]
    if hold.empty:
        raise ValidationError("holdout split is empty")
    s = hold["score"].to_numpy(dtype=float)
    y = hold["label_hicc"].to_numpy(dtype=int)
    k = scaled_capacity(params.capacity, len(hold), params.population)

    stated = replace(params, precision=cfg.evaluate.rule_precision)
    results = [run_scenario(stated, label="Rule-based (stated)")]
    measured = rule_precision(hold["rule_points"].to_numpy(dtype=float), y, k)
    if measured is None:
        logger.warning("[WARN] no holdout member fired a rule; measured rule-based column skipped")
    else:
        results.append(run_scenario(
            replace(params, precision=measured), label="Rule-based (measured)"
        ))
    model_precision = precision_at_k(s, y, k)
    results.append(run_scenario(replace(params, precision=model_precision), label="ML model"))

    reports = cfg.paths.reports
    written = [
        write_frame(savings_frame(results), reports / "savings.csv"),
        write_text(render_savings(results, break_even_precision(params)), reports / "savings.txt"),
    ]
    programs = {}
    for name, recurrent in (("emergent", 0), ("recurrent", 1)):
        sub = hold[hold["recurrent"] == recurrent]
        if not sub.empty:
            programs[name] = (sub["score"].to_numpy(dtype=float), sub["label_hicc"].to_numpy(dtype=int))
    sweep = capacity_sweep(programs, cfg.evaluate.capacities)
    written.append(write_frame(sweep_frame(sweep), reports / "capacity_sweep.csv"))
    written.append(write_text(render_sweep(sweep), reports / "capacity_sweep.txt"))
    logger.info("[OK] economics capacity=%d (holdout slots %d) model precision=%.4f", params.capacity, k, model_precision)
    return _wrote(written)


# ----------------------------- audit -----------------------------

def audit(cfg: PipelineConfig) -> List[Path]:
    ev = cfg.evaluate
    df = _scored_cohort(cfg)
    sdoh = read_sdoh(cfg.paths.input_file("sdoh"), _indicators(cfg))
    records = [
        AuditRecord(mid, z or None, float(sc), float(cost))
        for mid, z, sc, cost in zip(df["member_id"], df["zip"], df["score"], df["predict_total"])
    ]
    report = audit_report(records, sdoh, ev.audit_weighted, ev.audit_permutations, cfg.stream("permutation"))
    reports = cfg.paths.reports
    written = [
        write_scatter(report, reports / "zip_scatter.csv"),
        write_text(render_audit(report), reports / "audit.txt"),
    ]
    if ev.audit_plot:
        written.append(plot_scatter(report, reports / "zip_scatter.png"))
    return _wrote(written)


# ----------------------------- chaining -----------------------------

STAGES: Dict[str, Callable[[PipelineConfig], List[Path]]] = {
    "generate": generate,
    "featurize": featurize,
    "train": train,
    "calibrate": calibrate,
    "score": score,
    "evaluate": evaluate,
    "economics": economics,
    "audit": audit,
}


def run_pipeline(cfg: PipelineConfig) -> List[Path]:
    """All stages in order; generation is skipped when the config names an existing claims file."""
    written: List[Path] = []
    for name, stage in STAGES.items():
        if name == "generate" and cfg.paths.claims is not None:
            logger.info("[OK] using claims from %s; generation skipped", cfg.paths.claims)
            continue
        logger.info("[OK] stage %s", name)
        written.extend(stage(cfg))
    return written
