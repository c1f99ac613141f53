from datetime import date
from pathlib import Path

import pytest
import yaml

from adlens.config import apply_overrides, load_config, parse_config, validate_config
from adlens.errors import ValidationError


def write_config(tmp_path: Path, **raw) -> Path:
    raw.setdefault("dataset", "manifest.yaml")
    path = tmp_path / "adlens.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


class TestParsing:
    def test_defaults(self):
        cfg = parse_config({"dataset": "m.yaml"})
        assert cfg.seed is None and cfg.period is None
        assert cfg.agenda.max_lag == 10 and cfg.agenda.alpha == 0.01
        assert cfg.train.relevance.family == "random_forest"
        assert cfg.train.leaning.family == "multinomial_naive_bayes"
        assert cfg.report.any

    def test_paths_resolve_against_the_config_directory(self, tmp_path):
        cfg = load_config(write_config(tmp_path, gazetteer="data/g.psv", out="run"))
        assert cfg.dataset == tmp_path / "manifest.yaml"
        assert cfg.gazetteer == tmp_path / "data" / "g.psv"
        assert cfg.out == tmp_path / "run"
        assert cfg.source == tmp_path / "adlens.yaml"

    def test_model_override_keeps_other_defaults(self):
        cfg = parse_config({"dataset": "m.yaml", "train": {"relevance": {"family": "random_forest",
                                                                         "n_trees": 30}}})
        assert cfg.train.relevance.hyperparameters == {"min_samples_split": 3, "n_trees": 30}

    def test_agenda_period_falls_back_to_the_main_period(self):
        cfg = parse_config({"dataset": "m.yaml", "period": {"start": "2019-01-01", "end": "2019-06-30"}})
        assert cfg.agenda_period.start_date == date(2019, 1, 1)
        cfg = parse_config({"dataset": "m.yaml", "period": {"start": "2019-01-01", "end": "2019-06-30"},
                            "agenda": {"period": {"start": "2019-02-01", "end": "2019-03-01"}}})
        assert cfg.agenda_period.start_date == date(2019, 2, 1)

    @pytest.mark.parametrize("raw", [
        {"dataset": "m.yaml", "colour": "red"},
        {"dataset": "m.yaml", "agenda": {"lags": 3}},
        {"dataset": "m.yaml", "agenda": {"alpha": 1.5}},
        {"dataset": "m.yaml", "agenda": {"max_lag": 0}},
        {"dataset": "m.yaml", "seed": -1},
        {"dataset": "m.yaml", "seed": True},
        {"dataset": "m.yaml", "annotation": {"tie_break": "random"}},
        {"dataset": "m.yaml", "report": {"stance": "yes"}},
        {"dataset": "m.yaml", "train": {"folds": 1}},
        {"dataset": "m.yaml", "audience": {"reached_epsilon": 1.0}},
        {"seed": 1},
    ])
    def test_invalid(self, raw):
        with pytest.raises(ValidationError):
            parse_config(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(tmp_path / "nope.yaml")

    def test_broken_yaml(self, tmp_path):
        path = tmp_path / "adlens.yaml"
        path.write_text("dataset: [unclosed\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_config(path)


class TestOverrides:
    def test_flags_win(self, tmp_path):
        cfg = parse_config({"dataset": "m.yaml", "seed": 1,
                            "period": {"start": "2019-01-01", "end": "2019-06-30"}})
        cfg = apply_overrides(cfg, seed=7, period_end="2019-03-31", out=str(tmp_path), workers=2)
        assert cfg.seed == 7 and cfg.workers == 2
        assert (cfg.period.start_date, cfg.period.end_date) == (date(2019, 1, 1), date(2019, 3, 31))
        assert cfg.out == tmp_path

    def test_half_a_period_needs_the_other_half(self):
        cfg = parse_config({"dataset": "m.yaml"})
        with pytest.raises(ValidationError):
            apply_overrides(cfg, period_start="2019-01-01")

    def test_bad_date(self):
        with pytest.raises(ValidationError):
            apply_overrides(parse_config({"dataset": "m.yaml"}), period_start="2019-13-01",
                            period_end="2019-12-31")


class TestValidation:
    def test_missing_path(self, tmp_path):
        (tmp_path / "manifest.yaml").write_text("{}", encoding="utf-8")
        cfg = load_config(write_config(tmp_path, seed=0, gazetteer="missing.psv"))
        with pytest.raises(ValidationError, match="gazetteer"):
            validate_config(cfg)

    def test_required_keys(self, tmp_path):
        (tmp_path / "manifest.yaml").write_text("{}", encoding="utf-8")
        cfg = load_config(write_config(tmp_path))
        with pytest.raises(ValidationError, match="seed"):
            validate_config(cfg)
        validate_config(apply_overrides(cfg, seed=3))

    def test_synthetic_config_is_valid(self, bundle_config):
        validate_config(bundle_config, ("seed", "period"))
