"""Run configuration, read from YAML.

Relative paths resolve against the directory of the config file. Command-line
flags override config keys through `apply_overrides`.
"""
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
import typing as tp

import yaml

from .errors import ValidationError
from .stance.models import ModelSpec, load_model_spec, spec_from_dict
from .stance.text import TokenPipelineConfig
from .store import COLLECTION_DATE, PeriodFilter, as_date, parse_period

PATH_KEYS = ("dataset", "keywords", "themes", "gazetteer", "regions", "events",
             "potential_audience", "population", "survey")
SECTIONS = ("train", "text", "agenda", "audience", "annotation", "report")
TOP_LEVEL_KEYS = PATH_KEYS + SECTIONS + ("period", "collection_date", "seed", "workers", "out")


@dataclass(frozen=True)
class TrainConfig:
    relevance: ModelSpec = field(default_factory=lambda: load_model_spec("random_forest"))
    leaning: ModelSpec = field(default_factory=lambda: load_model_spec("multinomial_naive_bayes"))
    # linear model whose weights are reported as top features
    features: ModelSpec = field(default_factory=lambda: load_model_spec("linear_svm"))
    grid_search: bool = False
    folds: int = 10
    relevance_grid: tp.Optional[tp.Dict[str, tp.List[float]]] = None
    leaning_grid: tp.Optional[tp.Dict[str, tp.List[float]]] = None
    extra_irrelevant: int = 100
    top_features: int = 10


@dataclass(frozen=True)
class AgendaConfig:
    period: tp.Optional[PeriodFilter] = None
    max_lag: int = 10
    alpha: float = 0.01
    difference: bool = False


@dataclass(frozen=True)
class AudienceConfig:
    reached_epsilon: float = 0.0
    drop_unknown_gender: bool = True
    anti_migration_parties: tp.Tuple[str, ...] = ("Lega", "FdI")


@dataclass(frozen=True)
class AnnotationConfig:
    tie_break: str = "lower"


@dataclass(frozen=True)
class ReportToggles:
    stance: bool = True
    audience: bool = True
    targeting: bool = True
    agenda: bool = True
    features: bool = True

    @property
    def any(self) -> bool:
        return any((self.stance, self.audience, self.targeting, self.agenda, self.features))


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    seed: tp.Optional[int] = None
    keywords: tp.Optional[Path] = None
    themes: tp.Optional[Path] = None
    gazetteer: tp.Optional[Path] = None
    regions: tp.Optional[Path] = None
    events: tp.Optional[Path] = None
    potential_audience: tp.Optional[Path] = None
    population: tp.Optional[Path] = None
    survey: tp.Optional[Path] = None
    period: tp.Optional[PeriodFilter] = None
    collection_date: date = COLLECTION_DATE
    workers: int = 0
    out: tp.Optional[Path] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    text: TokenPipelineConfig = field(default_factory=TokenPipelineConfig)
    agenda: AgendaConfig = field(default_factory=AgendaConfig)
    audience: AudienceConfig = field(default_factory=AudienceConfig)
    annotation: AnnotationConfig = field(default_factory=AnnotationConfig)
    report: ReportToggles = field(default_factory=ReportToggles)
    source: tp.Optional[Path] = None

    @property
    def agenda_period(self) -> tp.Optional[PeriodFilter]:
        return self.agenda.period or self.period


def _section(raw: dict, name: str, allowed: tp.Iterable[str]) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ValidationError(f"config section {name} must be a mapping")
    unknown = set(value) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown keys in config section {name}: {sorted(unknown)}")
    return value


def _int(value, key: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValidationError(f"{key} must be an integer >= {minimum}, got {value!r}")
    return value


def _bool(value, key: str) -> bool:
    if not isinstance(value, bool):
        raise ValidationError(f"{key} must be true or false, got {value!r}")
    return value


def _train(raw: dict) -> TrainConfig:
    section = _section(raw, "train", TrainConfig.__dataclass_fields__)
    defaults = TrainConfig()
    kwargs: tp.Dict[str, tp.Any] = {}
    for name in ("relevance", "leaning", "features"):
        if name in section:
            kwargs[name] = spec_from_dict(section[name])
    for name in ("relevance_grid", "leaning_grid"):
        if section.get(name) is not None:
            if not isinstance(section[name], dict) or not section[name]:
                raise ValidationError(f"train.{name} must be a non-empty mapping of lists")
            kwargs[name] = {k: list(v) for k, v in section[name].items()}
    if "grid_search" in section:
        kwargs["grid_search"] = _bool(section["grid_search"], "train.grid_search")
    for name, minimum in (("folds", 2), ("extra_irrelevant", 0), ("top_features", 1)):
        if name in section:
            kwargs[name] = _int(section[name], f"train.{name}", minimum)
    return replace(defaults, **kwargs)


def _text(raw: dict) -> TokenPipelineConfig:
    section = _section(raw, "text", ("lowercase", "stemmer", "min_token_length", "stopwords", "ngram_max"))
    if "stopwords" in section:
        section = dict(section, stopwords=tuple(section["stopwords"] or ()))
    return TokenPipelineConfig(**section)


def _agenda(raw: dict) -> AgendaConfig:
    section = _section(raw, "agenda", ("period", "max_lag", "alpha", "difference"))
    alpha = section.get("alpha", 0.01)
    if not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
        raise ValidationError(f"agenda.alpha must be in (0, 1), got {alpha!r}")
    return AgendaConfig(
        period=parse_period(section.get("period"), "agenda.period"),
        max_lag=_int(section.get("max_lag", 10), "agenda.max_lag", 1),
        alpha=float(alpha),
        difference=_bool(section.get("difference", False), "agenda.difference"))


def _audience(raw: dict) -> AudienceConfig:
    section = _section(raw, "audience", ("reached_epsilon", "drop_unknown_gender", "anti_migration_parties"))
    epsilon = section.get("reached_epsilon", 0.0)
    if not isinstance(epsilon, (int, float)) or not 0 <= epsilon < 1:
        raise ValidationError(f"audience.reached_epsilon must be in [0, 1), got {epsilon!r}")
    return AudienceConfig(
        reached_epsilon=float(epsilon),
        drop_unknown_gender=_bool(section.get("drop_unknown_gender", True), "audience.drop_unknown_gender"),
        anti_migration_parties=tuple(section.get("anti_migration_parties", ("Lega", "FdI"))))


def _annotation(raw: dict) -> AnnotationConfig:
    section = _section(raw, "annotation", ("tie_break",))
    tie_break = section.get("tie_break", "lower")
    if tie_break not in ("lower", "higher"):
        raise ValidationError(f"annotation.tie_break must be lower or higher, got {tie_break!r}")
    return AnnotationConfig(tie_break)


def _report(raw: dict) -> ReportToggles:
    section = _section(raw, "report", ReportToggles.__dataclass_fields__)
    return ReportToggles(**{k: _bool(v, f"report.{k}") for k, v in section.items()})


def parse_config(raw: dict, root: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    unknown = set(raw) - set(TOP_LEVEL_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("dataset") is None:
        raise ValidationError("config needs a dataset manifest")
    paths = {key: root / str(raw[key]) for key in PATH_KEYS if raw.get(key) is not None}
    seed = raw.get("seed")
    if seed is not None:
        seed = _int(seed, "seed")
    collection_date = COLLECTION_DATE
    if raw.get("collection_date") is not None:
        collection_date = as_date(raw["collection_date"], "collection_date")
    return RunConfig(
        seed=seed,
        period=parse_period(raw.get("period")),
        collection_date=collection_date,
        workers=_int(raw.get("workers", 0), "workers"),
        out=root / str(raw["out"]) if raw.get("out") is not None else None,
        train=_train(raw), text=_text(raw), agenda=_agenda(raw), audience=_audience(raw),
        annotation=_annotation(raw), report=_report(raw),
        **paths)


def load_config(path: tp.Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"missing config file {path}")
    with open(path, encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as error:
            raise ValidationError(f"config {path} is not valid YAML: {error}")
    return replace(parse_config(raw, path.parent), source=path)


def apply_overrides(cfg: RunConfig, seed: tp.Optional[int] = None,
                    period_start: tp.Optional[str] = None, period_end: tp.Optional[str] = None,
                    out: tp.Optional[str] = None, workers: tp.Optional[int] = None) -> RunConfig:
    changes: tp.Dict[str, tp.Any] = {}
    if seed is not None:
        changes["seed"] = _int(seed, "--seed")
    if workers is not None:
        changes["workers"] = _int(workers, "--workers")
    if out is not None:
        changes["out"] = Path(out)
    if period_start is not None or period_end is not None:
        current = cfg.period
        start = as_date(period_start, "--period-start") if period_start else (current and current.start_date)
        end = as_date(period_end, "--period-end") if period_end else (current and current.end_date)
        if start is None or end is None:
            raise ValidationError("a period needs both a start and an end")
        changes["period"] = PeriodFilter(start, end)
    return replace(cfg, **changes)


def validate_config(cfg: RunConfig, require: tp.Sequence[str] = ("seed",)):
    """Fail before any work when a referenced path is missing or a required key is unset."""
    for key in require:
        if getattr(cfg, key) is None:
            raise ValidationError(f"{key} is required")
    for key in PATH_KEYS:
        path = getattr(cfg, key)
        if path is not None and not Path(path).is_file():
            raise ValidationError(f"{key} path does not exist: {path}")
