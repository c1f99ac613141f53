"""Pipeline composition and the report bundle.

A bundle is a set of named tables, each written as `<name>.csv` and
`<name>.json`, plus charts written as `<name>.svg` next to the table holding
their numbers. Nothing in a bundle depends on the wall clock or on file
locations, so two runs with the same inputs and seed give identical bytes.
"""
from dataclasses import dataclass, field, replace
from datetime import date
import json
from pathlib import Path
import time
import typing as tp

from loguru import logger
import numpy as np
import pandas as pd
import tqdm

from . import agenda, audience, charts, entities
from .__version__ import VERSION
from .annotation import (TrainingSets, agreement_report, build_training_sets, label_confusion,
                         labels_by_ad, stance_classes)
from .config import RunConfig
from .errors import NumericError, UndefinedResultError, ValidationError
from .ingest import AdRecord, estimated_impressions, keyword_filter, load_events, load_keyword_list, \
    load_theme_catalog
from .stance import GridResult, StancePipeline, cross_validate_pipeline, fit_tfidf, grid_search, \
    top_features, train_classifier, train_pipeline, transform
from .stance.pipeline import STANCE_ORDER
from .store import Dataset, filter_period, load_dataset
from .utils import derive_seed, human_seconds, stable_sum

ANTI, PRO, NEUTRAL = STANCE_ORDER
SUBSETS = ("all", ANTI, PRO)


def load_inputs(cfg: RunConfig) -> tp.Tuple[Dataset, Dataset]:
    """The dataset as stored, and its keyword-matching ads restricted to the run period."""
    raw = load_dataset(cfg.dataset)
    keywords = load_keyword_list(cfg.keywords)
    dataset = replace(raw, ads=keyword_filter(raw.ads, keywords))
    if len(dataset.ads) < len(raw.ads):
        logger.info(f"{len(raw.ads) - len(dataset.ads)} ads without a migration keyword left out")
    if cfg.period is not None:
        dataset = filter_period(dataset, cfg.period, cfg.collection_date)
        logger.info(f"{len(dataset.ads)} ads deliver within {cfg.period.start_date}..{cfg.period.end_date}")
    return raw, dataset


def resolve_dataset(cfg: RunConfig, dataset: Dataset) -> Dataset:
    gazetteer = entities.load_gazetteer(cfg.gazetteer)
    pages = entities.resolve_pages(dataset.ads + dataset.baseline_ads, gazetteer)
    return replace(dataset, pages=pages)


@dataclass
class StanceTraining:
    pipeline: StancePipeline
    sets: TrainingSets
    relevance_grid: tp.Optional[GridResult] = None
    leaning_grid: tp.Optional[GridResult] = None


def extra_irrelevant_texts(cfg: RunConfig, raw: Dataset) -> tp.List[str]:
    """A seeded sample of baseline ads, none of them annotated, used as extra irrelevant items."""
    annotated = {record.ad_id for record in raw.annotations}
    candidates = [ad for ad in raw.baseline_ads if ad.id not in annotated]
    count = min(cfg.train.extra_irrelevant, len(candidates))
    if count == 0:
        return []
    rng = np.random.default_rng(derive_seed(cfg.seed, 2))
    picked = sorted(rng.choice(len(candidates), size=count, replace=False))
    return [candidates[i].text for i in picked]


def train_stance(cfg: RunConfig, raw: Dataset, progress: bool = False) -> StanceTraining:
    """Training sets from the annotations, optional grid search, then the two-stage pipeline."""
    if not raw.annotations:
        raise ValidationError("the dataset holds no annotations to train on")
    sets = build_training_sets(raw.annotations, raw.texts(), extra_irrelevant_texts(cfg, raw),
                               cfg.annotation.tie_break)
    relevance_spec, leaning_spec = cfg.train.relevance, cfg.train.leaning
    relevance_grid = leaning_grid = None
    if cfg.train.grid_search:
        relevance_grid = grid_search([t for t, _ in sets.relevance_set], [y for _, y in sets.relevance_set],
                                     relevance_spec.family, cfg.train.relevance_grid, cfg.train.folds,
                                     derive_seed(cfg.seed, 3), cfg.text, cfg.workers, progress)
        leaning_grid = grid_search([t for t, _ in sets.leaning_set], [y for _, y in sets.leaning_set],
                                   leaning_spec.family, cfg.train.leaning_grid, cfg.train.folds,
                                   derive_seed(cfg.seed, 4), cfg.text, cfg.workers, progress)
        relevance_spec, leaning_spec = relevance_grid.best, leaning_grid.best
    pipeline = train_pipeline(sets, relevance_spec, leaning_spec, cfg.seed, cfg.text, cfg.workers)
    return StanceTraining(pipeline, sets, relevance_grid, leaning_grid)


def classify_ads(pipeline: StancePipeline, ads: tp.Sequence[AdRecord]) -> tp.Dict[str, str]:
    labels = pipeline.classify([ad.text for ad in ads]) if ads else []
    return {ad.id: label.value for ad, label in zip(ads, labels)}


def stances_frame(stances: tp.Mapping[str, str]) -> pd.DataFrame:
    return pd.DataFrame({"ad_id": sorted(stances), "stance": [stances[k] for k in sorted(stances)]},
                        columns=["ad_id", "stance"])


@dataclass
class ReportBundle:
    tables: tp.Dict[str, pd.DataFrame] = field(default_factory=dict)
    charts: tp.Dict[str, tp.Callable[[Path], Path]] = field(default_factory=dict)
    summary: tp.Dict[str, tp.Any] = field(default_factory=dict)

    def add_table(self, name: str, frame: pd.DataFrame):
        if name in self.tables:
            raise ValueError(f"duplicate report table {name}")
        self.tables[name] = frame.reset_index(drop=True)

    def add_chart(self, name: str, render: tp.Callable[[Path], Path]):
        # a chart is always written next to the table holding its numbers
        if name not in self.tables:
            raise ValueError(f"chart {name} has no sibling table")
        self.charts[name] = render

    def __bool__(self):
        return bool(self.tables)


@dataclass
class ReportContext:
    cfg: RunConfig
    raw: Dataset
    dataset: Dataset
    stances: tp.Dict[str, str]
    training: StanceTraining

    def subset(self, name: str) -> tp.List[AdRecord]:
        if name == "all":
            return list(self.dataset.ads)
        return [ad for ad in self.dataset.ads if self.stances.get(ad.id) == name]


def _agreement_table(annotations) -> tp.Optional[pd.DataFrame]:
    try:
        return agreement_report(annotations).to_frame()
    except UndefinedResultError as error:
        logger.warning(f"Agreement left out of the report: {error}")
        return None


def _stance_section(ctx: ReportContext, bundle: ReportBundle):
    counts = {label: 0 for label in STANCE_ORDER}
    parts: tp.Dict[str, tp.List[float]] = {label: [] for label in STANCE_ORDER}
    for ad in ctx.dataset.ads:
        label = ctx.stances[ad.id]
        counts[label] += 1
        parts[label].append(estimated_impressions(ad))
    impressions = {label: stable_sum(values) for label, values in parts.items()}
    total_ads, total = sum(counts.values()), stable_sum(impressions.values())
    bundle.add_table("stance_shares", pd.DataFrame([
        {"stance": label, "ads": counts[label], "ad_share": counts[label] / total_ads if total_ads else 0.0,
         "impressions": impressions[label], "impression_share": impressions[label] / total if total > 0 else 0.0}
        for label in STANCE_ORDER]))
    bundle.add_table("ad_stances", stances_frame(ctx.stances))

    pages = ctx.dataset.pages
    bundle.add_table("party_stance", audience.party_stance_table(ctx.dataset.ads, pages, ctx.stances))
    rollup = entities.affiliation_rollup(pages)
    bundle.add_table("affiliations", pd.DataFrame({"party": list(rollup), "pages": list(rollup.values())},
                                                  columns=["party", "pages"]))
    bundle.add_table("actor_types", entities.actor_type_rollup(pages, ctx.dataset.ads))

    annotations = ctx.raw.annotations
    agreement = _agreement_table(annotations)
    if agreement is not None:
        bundle.add_table("agreement", agreement)
    bundle.add_table("label_confusion", label_confusion(annotations).rename_axis("label").reset_index())

    cfg = ctx.cfg
    targets = stance_classes(annotations, cfg.annotation.tie_break)
    ad_ids = sorted(targets)
    texts = ctx.raw.texts()
    folds = min(cfg.train.folds, len(ad_ids))
    if folds >= 2:
        metrics = cross_validate_pipeline([texts[i] for i in ad_ids], [targets[i] for i in ad_ids],
                                          ctx.training.pipeline.relevance_model.spec,
                                          ctx.training.pipeline.leaning_model.spec,
                                          folds, derive_seed(cfg.seed, 5), cfg.text, cfg.workers)
        bundle.add_table("cv_metrics", metrics.to_frame())
        bundle.add_table("cv_confusion", metrics.confusion_frame())
    for name, grid in (("grid_relevance", ctx.training.relevance_grid),
                       ("grid_leaning", ctx.training.leaning_grid)):
        if grid is not None:
            bundle.add_table(name, grid.to_frame())


def _top_features_frame(sets: tp.Sequence[tp.Tuple[str, str]], ctx: ReportContext, unit: int) -> pd.DataFrame:
    cfg = ctx.cfg
    texts = [text for text, _ in sets]
    features = fit_tfidf(texts, cfg.text)
    model = train_classifier(transform(texts, features), [label for _, label in sets],
                             cfg.train.features, derive_seed(cfg.seed, unit))
    top = top_features(model, features.feature_names, cfg.train.top_features)
    rows = []
    for label, pairs in ((top.negative_class, top.negative), (top.positive_class, top.positive)):
        rows.extend({"class": label, "rank": rank, "feature": name, "weight": weight}
                    for rank, (name, weight) in enumerate(pairs, start=1))
    return pd.DataFrame(rows, columns=["class", "rank", "feature", "weight"])


def _features_section(ctx: ReportContext, bundle: ReportBundle):
    sets = ctx.training.sets
    bundle.add_table("top_features_relevance", _top_features_frame(sets.relevance_set, ctx, 6))
    bundle.add_table("top_features_leaning", _top_features_frame(sets.leaning_set, ctx, 7))


def _odds_row(comparison: str, result: audience.OddsResult) -> dict:
    return {"comparison": comparison, "value": result.value, "defined": result.defined,
            "exact": str(result.ratio) if result.ratio is not None else "", "reason": result.reason}


def _party_ads(ads: tp.Iterable[AdRecord], pages: tp.Iterable[entities.PageEntity],
               parties: tp.Collection[str]) -> tp.List[AdRecord]:
    party_of = {page.page_id: page.party_affiliation for page in pages}
    return [ad for ad in ads if party_of.get(ad.page_id) in parties]


def _coarse_ages(ads: tp.Sequence[AdRecord], party: str, potential, population) -> tp.Optional[tp.Dict[str, float]]:
    if not ads:
        return None
    groups = audience.impressions_by_demographic(ads, drop_unknown_gender=True).groups(drop_unknown_gender=True)
    if potential is not None and population is not None:
        groups = audience.normalize_to_population(groups, potential.for_party(party), population)
    coarse = audience.coarsen_age_buckets(audience.age_distribution(groups))
    return coarse.shares if coarse.defined else None


def _audience_section(ctx: ReportContext, bundle: ReportBundle):
    cfg = ctx.cfg
    drop_unknown = cfg.audience.drop_unknown_gender
    matrices = {}
    for name in SUBSETS:
        ads = ctx.subset(name)
        matrices[name] = audience.impressions_by_demographic(ads, drop_unknown_gender=drop_unknown)
        table = f"demographics_{name}"
        bundle.add_table(table, matrices[name].to_frame(drop_unknown_gender=drop_unknown))
        if any(matrices[name].gender_total(g) > 0 for g in ("male", "female")):
            bundle.add_chart(table, lambda path, m=matrices[name], n=name: charts.render_pyramid(
                m, path, f"Impressions by age and gender ({n})"))

    rows = [_odds_row(f"odds_{name}", audience.gender_odds(matrices[name])) for name in SUBSETS]
    rows.append(_odds_row(f"ratio_{ANTI}_{PRO}", audience.gender_odds_ratio(matrices[ANTI], matrices[PRO])))
    parties = cfg.audience.anti_migration_parties
    migration = _party_ads(ctx.dataset.ads, ctx.dataset.pages, parties)
    baseline = _party_ads(ctx.dataset.baseline_ads, ctx.dataset.pages, parties)
    rows.append(_odds_row(f"ratio_migration_baseline_{'_'.join(parties)}", audience.gender_odds_ratio(
        audience.impressions_by_demographic(migration, drop_unknown),
        audience.impressions_by_demographic(baseline, drop_unknown))))
    bundle.add_table("odds_ratios", pd.DataFrame(rows))

    if cfg.survey is None:
        return
    survey = audience.load_survey(cfg.survey)
    potential = audience.load_potential_audience(cfg.potential_audience) if cfg.potential_audience else None
    population = audience.load_population(cfg.population) if cfg.population else None
    ads_all, ads_migration = {}, {}
    for party in sorted(survey.shares):
        migration = _party_ads(ctx.dataset.ads, ctx.dataset.pages, (party,))
        baseline = _party_ads(ctx.dataset.baseline_ads, ctx.dataset.pages, (party,))
        for target, ads in ((ads_all, baseline + migration), (ads_migration, migration)):
            shares = _coarse_ages(ads, party, potential, population)
            if shares is not None:
                target[party] = shares
    comparison = audience.compare_to_survey(ads_all, ads_migration, survey)
    bundle.add_table("survey_comparison", comparison.table)
    bundle.add_table("survey_distances", comparison.distances)


def _targeting_section(ctx: ReportContext, bundle: ReportBundle):
    regions = audience.load_regions(ctx.cfg.regions)
    summary = audience.targeting_summary(ctx.dataset.ads, regions, ctx.cfg.audience.reached_epsilon)
    bundle.add_table("targeting", summary.to_frame())
    for name, frame, key in (("targeting_regions", summary.regions_histogram, "regions_reached"),
                             ("targeting_age_buckets", summary.buckets_histogram, "age_buckets_reached")):
        bundle.add_table(name, frame)
        if frame["impressions"].gt(0).any():
            bundle.add_chart(name, lambda path, f=frame, k=key: charts.render_histogram(
                f, k, path, title=f"Impressions by {k.replace('_', ' ')}"))


def _agenda_bounds(ctx: ReportContext) -> tp.Tuple[date, date]:
    period = ctx.cfg.agenda_period
    if period is not None:
        return period.start_date, period.end_date
    days = [a.date for a in ctx.dataset.articles]
    if not days:
        raise ValidationError("no agenda period configured and no articles to infer one from")
    return min(days), max(days)


def _agenda_section(ctx: ReportContext, bundle: ReportBundle):
    cfg = ctx.cfg
    start, end = _agenda_bounds(ctx)
    catalog = load_theme_catalog(cfg.themes)
    events = load_events(cfg.events)
    news = agenda.news_series(ctx.dataset.articles, catalog, start, end)
    impressions = {name: agenda.impressions_series(
        ctx.subset(name), start=start, end=end, collection_date=cfg.collection_date,
        name=f"impressions_{name}") for name in SUBSETS}

    bundle.add_table("news_series", news.to_frame())
    bundle.add_chart("news_series", lambda path: charts.render_series(
        [news], path, events, "Migration share of news themes"))
    frame = pd.DataFrame({"date": [d.isoformat() for d in news.dates]})
    for name in SUBSETS:
        frame[name] = impressions[name].values
    bundle.add_table("impressions_series", frame)
    bundle.add_chart("impressions_series", lambda path: charts.render_series(
        list(impressions.values()), path, events, "Estimated daily impressions"))

    for name in SUBSETS:
        if not impressions[name].values.any():
            logger.warning(f"No {name} ads in the agenda window, skipping its Granger tests")
            continue
        try:
            results = agenda.granger_both_directions(news, impressions[name], cfg.agenda.max_lag,
                                                     cfg.agenda.alpha, cfg.agenda.difference, cfg.workers)
        except NumericError as error:
            logger.warning(f"Skipping the {name} Granger tests: {error}")
            continue
        table = f"granger_{name}"
        bundle.add_table(table, pd.concat([r.to_frame() for r in results], ignore_index=True))
        bundle.add_chart(table, lambda path, r=results, n=name: charts.render_granger(
            r, path, f"Granger F statistic by lag ({n})"))


SECTIONS = (
    ("stance", _stance_section),
    ("features", _features_section),
    ("audience", _audience_section),
    ("targeting", _targeting_section),
    ("agenda", _agenda_section),
)


def build_report(cfg: RunConfig, raw: Dataset, dataset: Dataset, training: StanceTraining,
                 stances: tp.Mapping[str, str], progress: bool = False) -> ReportBundle:
    bundle = ReportBundle()
    if not cfg.report.any:
        logger.info("Every report section is switched off")
        return bundle
    ctx = ReportContext(cfg, raw, dataset, dict(stances), training)
    enabled = [(name, section) for name, section in SECTIONS if getattr(cfg.report, name)]
    for name, section in tqdm.tqdm(enabled, desc="report", leave=False, disable=not progress):
        begin = time.time()
        section(ctx, bundle)
        logger.debug(f"Report section {name} took {human_seconds(time.time() - begin)}")
    bundle.summary = {
        "adlens": VERSION,
        "seed": cfg.seed,
        "period": None if cfg.period is None else {"start": cfg.period.start_date.isoformat(),
                                                   "end": cfg.period.end_date.isoformat()},
        "sections": [name for name, _ in enabled],
        "ads": len(dataset.ads),
        "baseline_ads": len(dataset.baseline_ads),
        "articles": len(dataset.articles),
        "annotated_ads": len(labels_by_ad(raw.annotations)),
        "unresolved_pages": len(dataset.unresolved_pages),
        "diagnostics": list(raw.diagnostics),
        "tables": sorted(bundle.tables),
        "charts": sorted(bundle.charts),
    }
    return bundle


def write_bundle(bundle: ReportBundle, directory: tp.Union[str, Path]) -> tp.List[Path]:
    """Write tables, then charts one at a time; returns the written files in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(bundle.tables):
        frame = bundle.tables[name]
        frame.to_csv(directory / f"{name}.csv", index=False)
        frame.to_json(directory / f"{name}.json", orient="records", indent=1, double_precision=15)
        written += [directory / f"{name}.csv", directory / f"{name}.json"]
    for name in sorted(bundle.charts):
        written.append(bundle.charts[name](directory / f"{name}.svg"))
    if bundle:
        path = directory / "summary.json"
        path.write_text(json.dumps(bundle.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    logger.info(f"Wrote {len(written)} report files to {directory}")
    return written
