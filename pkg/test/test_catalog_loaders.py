from __future__ import annotations

from datetime import date

import pytest

from hicc.catalog import TOP20_FEATURES
from hicc.claims import Gender
from hicc.config import REPO_ROOT, SEED_STREAMS, sub_seed
from hicc.errors import ConfigError
from hicc.loaders import apply_overrides, load_catalog, load_config, sdoh_feature_name, write_catalog


def test_bundled_catalog_covers_top20(catalog, indicators):
    assert catalog.missing_top20() == []
    sdoh = catalog.by_family("sdoh")
    assert len(sdoh) == len(indicators) == 39
    assert sdoh[0].name == sdoh_feature_name("minority_fraction") == "SDOH_MINORITY_FRACTION"
    assert len(catalog) == len(set(catalog.names))
    assert set(TOP20_FEATURES) <= set(catalog.names)


def test_catalog_schema_version_tracks_names(catalog):
    pruned = catalog.subset(TOP20_FEATURES)
    assert len(pruned) == 20
    assert pruned.version.endswith(".pruned20")
    assert pruned.schema_version != catalog.schema_version
    # catalog order survives subsetting
    assert list(pruned.names) == [n for n in catalog.names if n in set(TOP20_FEATURES)]


def test_written_catalog_reloads(tmp_path, catalog, indicators):
    path = write_catalog(catalog.subset(TOP20_FEATURES), tmp_path / "pruned.yaml")
    again = load_catalog(path, indicators)
    assert again.names == catalog.subset(TOP20_FEATURES).names


def _catalog_file(tmp_path, body: str):
    p = tmp_path / "catalog.yaml"
    p.write_text("name: t\nversion: '1'\n" + body, encoding="utf-8")
    return p


def test_duplicate_feature_rejected(tmp_path):
    p = _catalog_file(tmp_path, "features:\n  - {name: AGE, family: actuarial}\n  - {name: AGE, family: actuarial}\n")
    with pytest.raises(ConfigError, match="duplicate feature name AGE"):
        load_catalog(p)


def test_bad_category_field_rejected(tmp_path):
    p = _catalog_file(tmp_path, "features:\n  - {name: X, family: category, field: zip, codes: [A]}\n")
    with pytest.raises(ConfigError, match="field must be one of"):
        load_catalog(p)


def test_unknown_family_feature_rejected(tmp_path):
    p = _catalog_file(tmp_path, "features:\n  - {name: NOT_A_COST, family: cost}\n")
    with pytest.raises(ConfigError, match="not produced by family cost"):
        load_catalog(p)


def test_life_table_lookup_clamps(life_table):
    assert life_table.lookup(0, Gender.F) == pytest.approx(81.2)
    assert life_table.lookup(-3, Gender.M) == pytest.approx(76.3)
    assert life_table.lookup(140, Gender.F) == life_table.lookup(100, Gender.F)
    assert life_table.lookup(40, Gender.F) > life_table.lookup(41, Gender.F)
    assert life_table.years_lost


def test_load_bundled_config():
    cfg = load_config(REPO_ROOT / "config" / "small.yaml")
    assert cfg.seed == 20190401
    assert cfg.periods.report_start == date(2017, 4, 1)
    assert cfg.paths.workdir == (REPO_ROOT / "runs" / "small").resolve()
    assert cfg.generate.n_members == 50_000
    assert cfg.train.learning_rates == (0.05, 0.1)
    assert cfg.evaluate.thresholds == (0.5, 0.6, 0.7, 0.76, 0.8, 0.9, 1.0)
    assert cfg.evaluate.capacities == (300, 500, 1000)
    assert cfg.generate.seed == sub_seed(cfg.seed, "generate")


def test_overrides_dotted_and_bare():
    cfg = load_config(
        REPO_ROOT / "config" / "small.yaml",
        {"generate.n_members": "1200", "n_trees": "7", "economics.mean_hicc_cost": "500000", "seed": "5"},
    )
    assert cfg.generate.n_members == 1200
    assert cfg.model.n_trees == 7
    assert cfg.economics.mean_hicc_cost == 500_000.0
    assert cfg.generate.mean_hicc_cost == 413_975.0
    assert cfg.seed == 5


def test_ambiguous_and_unknown_overrides():
    with pytest.raises(ConfigError, match="ambiguous config key 'mean_hicc_cost'"):
        apply_overrides({}, {"mean_hicc_cost": "1"})
    with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
        apply_overrides({}, {"bogus": "1"})
    with pytest.raises(ConfigError, match="unknown config key 'model.bogus'"):
        apply_overrides({}, {"model.bogus": "1"})
    with pytest.raises(ConfigError, match="unknown config key 'model.seed'"):
        apply_overrides({}, {"model.seed": "1"})


def test_missing_key_names_key_and_file(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("seed: 1\nperiods:\n  report_start: 2017-04-01\npaths:\n  workdir: out\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert str(exc.value) == f"missing config key 'periods.report_end' in {p}"


def test_sub_seed_streams_are_distinct_and_stable():
    seeds = [sub_seed(7, s) for s in SEED_STREAMS]
    assert len(set(seeds)) == len(SEED_STREAMS)
    assert sub_seed(7, "split") == sub_seed(7, "split")
    assert sub_seed(7, "split") != sub_seed(8, "split")
    assert all(0 <= s < 2**64 for s in seeds)
