"""Synthetic archive bundle for offline runs and the test-suite.

`write_bundle(out, seed)` writes an ads archive, a baseline archive, a GKG
file, annotations, the audience side tables, event markers, a dataset
manifest and a run config. The structure planted in it:

- 600 migration ads in 12 impression blocks of 50 ads with equal impressions;
  31 ads per block are targeted, so targeted ads carry 62% of impressions;
- anti ads skew male and older, pro ads female and younger;
- class-exclusive vocabulary for the anti, pro and neutral stances;
- anti ads tend to start one day after news attention peaks;
- 500 annotated ads whose majority labels fall on the planted stance;
- 30 off-topic ads without a migration keyword and 40 stale snapshots.

The planted stance and targeting kind of every migration ad go to `truth.csv`.
"""
from dataclasses import replace
from datetime import date, datetime, timedelta
from pathlib import Path
import shutil
import typing as tp

from loguru import logger
import numpy as np
import pandas as pd
import yaml

from . import audience
from .annotation import IRRELEVANT, AnnotationRecord, dump_annotations
from .ingest import (ADULT_BUCKETS, AGE_BUCKETS, DATA_ROOT, GENDERS, AdRecord, DemographicCell,
                     NewsArticle, RangedValue, dump_ad_line, load_events, load_theme_catalog,
                     serialize_gkg_article)
from .stance.pipeline import STANCE_ORDER
from .store import COLLECTION_DATE, FILE_NAMES, MANIFEST_NAME

ANTI, PRO, NEUTRAL = STANCE_ORDER

START = date(2019, 1, 1)
END = COLLECTION_DATE
AGENDA_END = date(2019, 12, 31)
BLOCK_SIZE = 50
TARGETED_PER_BLOCK = 31
BLOCK_LOWER_BOUNDS = (1000, 2000, 3000, 5000, 7000, 10000, 15000, 20000, 30000, 40000, 50000, 80000)
TRIPLE_ANNOTATED = 200
SINGLE_ANNOTATED = 300
ANNOTATORS = tuple(f"ann{i:02d}" for i in range(1, 13))
OFF_TOPIC_ADS = 30
STALE_SNAPSHOTS = 40
BASELINE_ADS = 200
ARTICLES_PER_DAY = 20
CROSS_CLASS_NOISE = 0.1

# page id, name, party (None for non-party actors)
PAGES = (
    ("page-01", "Lega Salvini Premier", "Lega"),
    ("page-02", "Marco Bellini", "Lega"),
    ("page-03", "Sara Colombo Official", "Lega"),
    ("page-04", "Fratelli d'Italia", "FdI"),
    ("page-05", "Davide Rinaldi", "FdI"),
    ("page-06", "Partito Democratico", "PD"),
    ("page-07", "Giulia Ferri", "PD"),
    ("page-08", "Movimento 5 Stelle", "M5S"),
    ("page-09", "Paolo Greco", "M5S"),
    ("page-10", "Italia Viva", "IV"),
    ("page-11", "Porto Aperto Onlus", None),
    ("page-12", "Mediterraneo Solidale", None),
    ("page-13", "Cronache del Nord", None),
    ("page-14", "Università di Bologna", None),
    ("page-15", "Camera del Lavoro Milano", None),
    ("page-16", "Verifica Fatti", None),
    ("page-17", "Comitato Quartiere Sereno", None),
    ("page-18", "Offerte della Settimana", None),
)
PAGE_POOLS = {
    ANTI: ("page-01", "page-02", "page-03", "page-04", "page-05"),
    PRO: ("page-06", "page-07", "page-10", "page-11", "page-12"),
    NEUTRAL: tuple(p[0] for p in PAGES[:17]),
}
OFF_TOPIC_PAGE = "page-18"
PARTY_SIZES = {"Lega": 3.0, "PD": 2.5, "M5S": 2.0, "FdI": 1.5, "IV": 0.5}

KEYWORD_NOUNS = ("immigrazione", "migranti", "rifugiati", "profughi", "stranieri", "migrazione")
VOCABULARY = {
    ANTI: ("clandestini", "invasione", "confini", "espulsioni", "rimpatri", "sicurezza",
           "porti", "chiusi", "difendere", "degrado"),
    PRO: ("diritti", "solidarietà", "integrazione", "umanità", "razzismo", "odio",
          "inclusione", "dignità", "sfruttamento", "salvataggi"),
    NEUTRAL: ("sondaggio", "incontro", "convegno", "dibattito", "intervista", "programma",
              "serata", "presentazione", "libro", "evento"),
}
BASELINE_WORDS = ("tasse", "lavoro", "scuola", "sanità", "pensioni", "imprese", "ambiente",
                  "energia", "trasporti", "giovani", "bollette", "ospedali")
FILLER = ("oggi", "domani", "città", "comunità", "governo", "paese", "famiglie", "piazza",
          "cittadini", "nostro", "futuro", "insieme")
OTHER_THEMES = ("ECON_TAXATION", "EDUCATION", "HEALTH_PANDEMIC", "ELECTION", "GENERAL_GOVERNMENT",
                "SECURITY_SERVICES", "ENV_CLIMATECHANGE", "TAX_FNCACT_MINISTER", "LEGISLATION",
                "ECON_UNEMPLOYMENT")

GENDER_WEIGHTS = {
    ANTI: (0.62, 0.34, 0.04),
    PRO: (0.40, 0.56, 0.04),
    NEUTRAL: (0.50, 0.46, 0.04),
    "baseline": (0.52, 0.44, 0.04),
}
# 13-17 first, then the adult buckets
AGE_WEIGHTS = {
    ANTI: (0.01, 0.06, 0.10, 0.14, 0.20, 0.25, 0.25),
    PRO: (0.01, 0.25, 0.25, 0.18, 0.14, 0.10, 0.08),
    NEUTRAL: (0.01, 0.15, 0.18, 0.18, 0.18, 0.16, 0.15),
    "baseline": (0.01, 0.14, 0.17, 0.18, 0.18, 0.17, 0.16),
}
POPULATION = {
    "male": (0.026, 0.040, 0.058, 0.066, 0.080, 0.070, 0.100),
    "female": (0.025, 0.038, 0.056, 0.066, 0.084, 0.077, 0.214),
}
# platform users over-represent the young
PLATFORM_SKEW = (1.4, 1.5, 1.3, 1.1, 0.9, 0.7, 0.5)
TARGETING_KINDS = ("regions", "ages", "gender")


def _shares(weights: tp.Sequence[float]) -> tp.List[float]:
    total = float(sum(weights))
    return [max(round(float(w) / total, 4), 0.0001) for w in weights]


def _words(rng: np.random.Generator, pool: tp.Sequence[str], count: int) -> tp.List[str]:
    return [str(w) for w in rng.choice(pool, size=count, replace=False)]


def _text(rng: np.random.Generator, vocabulary: tp.Sequence[str], keyword: bool = True) -> str:
    parts = _words(rng, vocabulary, 3) + _words(rng, FILLER, 4)
    if keyword:
        parts += _words(rng, KEYWORD_NOUNS, 1)
    rng.shuffle(parts)
    return " ".join(parts).capitalize() + "."


def _demographics(rng: np.random.Generator, profile: str, genders: tp.Sequence[str] = GENDERS,
                  ages: tp.Sequence[str] = ADULT_BUCKETS) -> tp.Tuple[DemographicCell, ...]:
    keys = []
    weights = []
    for g, gender in enumerate(GENDERS):
        for a, age in enumerate(AGE_BUCKETS):
            if gender in genders and age in ages:
                keys.append((gender, age))
                weights.append(GENDER_WEIGHTS[profile][g] * AGE_WEIGHTS[profile][a] * rng.uniform(0.8, 1.2))
    return tuple(DemographicCell(g, a, s) for (g, a), s in zip(keys, _shares(weights)))


def _regions(rng: np.random.Generator, names: tp.Sequence[str]) -> tp.Tuple[tp.Tuple[str, float], ...]:
    weights = rng.uniform(0.5, 1.5, size=len(names))
    return tuple(zip(names, _shares(weights)))


def attention(day: date, events: tp.Sequence[tp.Tuple[date, str]]) -> float:
    """News attention to migration: a floor plus decaying bumps after each event."""
    level = 0.1 + 0.05 * (day.toordinal() % 7 == 0)
    for event, _ in events:
        offset = (day - event).days
        if -2 <= offset:
            level += np.exp(-abs(offset) / 6.0)
    return float(level)


def _days(start: date, end: date) -> tp.List[date]:
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


def _ad(ad_id: str, page_id: str, text: str, start: date, stop: tp.Optional[date],
        impressions: RangedValue, demographics, regions, snapshot: datetime) -> AdRecord:
    names = {p[0]: p[1] for p in PAGES}
    created = datetime.combine(start - timedelta(days=1), datetime.min.time()) + timedelta(hours=9)
    return AdRecord(
        id=ad_id, page_id=page_id, page_name=names[page_id], text=text, created=created,
        delivery_start=start, delivery_stop=stop, impressions=impressions,
        cost=RangedValue(impressions.lower // 100, (impressions.upper or impressions.lower) // 50),
        url=f"https://archive.example/ads/{ad_id}",
        demographic_distribution=demographics, region_distribution=regions, snapshot_time=snapshot)


class _Builder:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.events = load_events()
        self.regions = audience.load_regions()
        self.days = _days(START, END - timedelta(days=30))
        weights = np.array([attention(day - timedelta(days=1), self.events) for day in self.days])
        self.follow_news = weights / weights.sum()
        self.snapshot = datetime.combine(COLLECTION_DATE, datetime.min.time()) + timedelta(hours=12)

    def _window(self, stance: str) -> tp.Tuple[date, tp.Optional[date]]:
        rng = self.rng
        if stance == ANTI:
            start = self.days[int(rng.choice(len(self.days), p=self.follow_news))]
        else:
            start = self.days[int(rng.integers(len(self.days)))]
        if rng.random() < 0.05:
            return start, None
        return start, start + timedelta(days=int(rng.integers(0, 20)))

    def migration_ads(self) -> tp.Tuple[tp.List[AdRecord], tp.List[dict]]:
        rng = self.rng
        ads, truth = [], []
        for block, lower in enumerate(BLOCK_LOWER_BOUNDS):
            upper = None if block == len(BLOCK_LOWER_BOUNDS) - 1 else 2 * lower - 1
            anti, pro = 5 + block, 18 - block
            stances = [ANTI] * anti + [PRO] * pro + [NEUTRAL] * (BLOCK_SIZE - anti - pro)
            rng.shuffle(stances)
            targeted = np.zeros(BLOCK_SIZE, dtype=bool)
            targeted[rng.choice(BLOCK_SIZE, size=TARGETED_PER_BLOCK, replace=False)] = True
            kind_index = 0
            for i, stance in enumerate(stances):
                ad_id = f"ad-{block:02d}{i:02d}"
                page = str(rng.choice(PAGE_POOLS[stance]))
                genders, ages, regions = GENDERS, ADULT_BUCKETS, self.regions
                if targeted[i]:
                    kind = TARGETING_KINDS[kind_index % len(TARGETING_KINDS)]
                    kind_index += 1
                    if kind == "regions":
                        count = int(rng.integers(1, 16))
                        picked = set(rng.choice(len(self.regions), size=count, replace=False).tolist())
                        regions = tuple(r for j, r in enumerate(self.regions) if j in picked)
                    elif kind == "ages":
                        dropped = set(_words(rng, ADULT_BUCKETS, int(rng.integers(1, 4))))
                        ages = tuple(a for a in ADULT_BUCKETS if a not in dropped)
                    else:
                        gender = {ANTI: "male", PRO: "female"}.get(stance) or str(rng.choice(("male", "female")))
                        genders = (gender,)
                else:
                    kind = "untargeted"
                    if rng.random() < 0.5:
                        ages = AGE_BUCKETS
                        kind = "untargeted_with_minors"
                start, stop = self._window(stance)
                ads.append(_ad(ad_id, page, _text(rng, VOCABULARY[stance]), start, stop,
                               RangedValue(lower, upper), _demographics(rng, stance, genders, ages),
                               _regions(rng, regions), self.snapshot))
                truth.append({"ad_id": ad_id, "stance": stance, "targeting": kind, "block": block})
        return ads, truth

    def off_topic_ads(self) -> tp.List[AdRecord]:
        rng = self.rng
        ads = []
        for i in range(OFF_TOPIC_ADS):
            start = self.days[int(rng.integers(len(self.days)))]
            ads.append(_ad(f"ad-off{i:02d}", OFF_TOPIC_PAGE, _text(rng, BASELINE_WORDS, keyword=False),
                           start, start + timedelta(days=3), RangedValue(1000, 1999),
                           _demographics(rng, "baseline"), _regions(rng, self.regions), self.snapshot))
        return ads

    def stale_snapshots(self, ads: tp.Sequence[AdRecord]) -> tp.List[AdRecord]:
        picked = sorted(self.rng.choice(len(ads), size=STALE_SNAPSHOTS, replace=False).tolist())
        stale = []
        for i in picked:
            ad = ads[i]
            stale.append(replace(ad, impressions=RangedValue(ad.impressions.lower // 2, ad.impressions.lower - 1),
                                 snapshot_time=self.snapshot - timedelta(days=45)))
        return stale

    def baseline_ads(self) -> tp.List[AdRecord]:
        rng = self.rng
        party_pages = [p[0] for p in PAGES if p[2] is not None]
        ads = []
        for i in range(BASELINE_ADS):
            lower = int(rng.choice(BLOCK_LOWER_BOUNDS[:10]))
            start = self.days[int(rng.integers(len(self.days)))]
            ads.append(_ad(f"base-{i:03d}", party_pages[i % len(party_pages)],
                           _text(rng, BASELINE_WORDS, keyword=False), start,
                           start + timedelta(days=int(rng.integers(0, 15))), RangedValue(lower, 2 * lower - 1),
                           _demographics(rng, "baseline"), _regions(rng, self.regions), self.snapshot))
        return ads

    def articles(self) -> tp.List[NewsArticle]:
        rng = self.rng
        migration = sorted(load_theme_catalog().migration_themes)
        articles = []
        for day in _days(START, END):
            probability = min(0.9, 0.08 + 0.5 * attention(day, self.events))
            for i in range(ARTICLES_PER_DAY):
                themes = _words(rng, OTHER_THEMES, int(rng.integers(3, 7)))
                if rng.random() < probability:
                    themes += _words(rng, migration, int(rng.integers(1, 4)))
                articles.append(NewsArticle(day, f"https://news.example/{day:%Y%m%d}/{i:02d}", tuple(themes)))
        return articles

    def _labels(self, stance: str, count: int) -> tp.List[tp.Union[int, str]]:
        rng = self.rng
        within = {ANTI: (4, 5), PRO: (1, 2), NEUTRAL: (3, 3, IRRELEVANT)}[stance]
        labels = [within[int(rng.integers(len(within)))] for _ in range(count)]
        # a dissenting third label only where the first two already agree
        if count == 3 and labels[0] == labels[1] and rng.random() < CROSS_CLASS_NOISE:
            others = [label for label in (1, 2, 3, 4, 5, IRRELEVANT)
                      if label not in {ANTI: (4, 5), PRO: (1, 2), NEUTRAL: (3, IRRELEVANT)}[stance]]
            labels[2] = others[int(rng.integers(len(others)))]
        return labels

    def annotations(self, truth: tp.Sequence[dict]) -> tp.List[AnnotationRecord]:
        rng = self.rng
        picked = rng.choice(len(truth), size=TRIPLE_ANNOTATED + SINGLE_ANNOTATED, replace=False).tolist()
        records = []
        for n, index in enumerate(picked):
            row = truth[index]
            count = 3 if n < TRIPLE_ANNOTATED else 1
            annotators = sorted(_words(rng, ANNOTATORS, count))
            for annotator, label in zip(annotators, self._labels(row["stance"], count)):
                records.append(AnnotationRecord(row["ad_id"], annotator, label))
        return sorted(records, key=lambda r: (r.ad_id, r.annotator_id))


def _population_frame() -> pd.DataFrame:
    rows = [{"gender": g, "age": a, "share": POPULATION[g][i]}
            for g in ("male", "female") for i, a in enumerate(AGE_BUCKETS)]
    return pd.DataFrame(rows, columns=["gender", "age", "share"])


def _potential_frame() -> pd.DataFrame:
    rows = []
    for party, size in PARTY_SIZES.items():
        for g in ("male", "female"):
            for i, a in enumerate(AGE_BUCKETS):
                rows.append({"party": party, "gender": g, "age": a,
                             "users": int(round(1e6 * size * POPULATION[g][i] * PLATFORM_SKEW[i]))})
    return pd.DataFrame(rows, columns=["party", "gender", "age", "users"])


def _survey_frame(migration: tp.Sequence[AdRecord], baseline: tp.Sequence[AdRecord],
                  potential: pd.DataFrame, population: pd.DataFrame) -> pd.DataFrame:
    """Lega's survey sits close to its normalized ad audience, PD's far from it."""
    party_of = {p[0]: p[2] for p in PAGES}
    lega = [ad for ad in list(migration) + list(baseline) if party_of[ad.page_id] == "Lega"]
    groups = audience.impressions_by_demographic(lega, drop_unknown_gender=True).groups()
    shares = audience.PopulationShares({(r.gender, r.age): r.share for r in population.itertuples()})
    users = {(r.gender, r.age): float(r.users) for r in potential.itertuples() if r.party == "Lega"}
    coarse = audience.coarsen_age_buckets(audience.age_distribution(
        audience.normalize_to_population(groups, users, shares))).shares
    near = [round(coarse["18-34"] + 0.01, 6), round(coarse["35-64"] - 0.01, 6)]
    near.append(round(1.0 - sum(near), 6))
    rows = [{"party": "Lega", "bucket": b, "share": s} for b, s in zip(audience.COARSE_BUCKETS, near)]
    rows += [{"party": "PD", "bucket": b, "share": s}
             for b, s in zip(audience.COARSE_BUCKETS, (0.10, 0.35, 0.55))]
    return pd.DataFrame(rows, columns=["party", "bucket", "share"])


def _write_lines(path: Path, lines: tp.Iterable[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


def write_bundle(out: tp.Union[str, Path], seed: int = 0) -> Path:
    """Write the synthetic bundle into `out`; returns the path of its run config."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    builder = _Builder(seed)
    ads, truth = builder.migration_ads()
    off_topic = builder.off_topic_ads()
    stale = builder.stale_snapshots(ads)
    baseline = builder.baseline_ads()
    articles = builder.articles()
    annotations = builder.annotations(truth)

    archive = sorted(ads + off_topic + stale, key=lambda ad: (ad.id, ad.snapshot_time))
    _write_lines(out / FILE_NAMES["ads"], map(dump_ad_line, archive))
    _write_lines(out / FILE_NAMES["baseline_ads"], map(dump_ad_line, baseline))
    _write_lines(out / FILE_NAMES["articles"],
                 (serialize_gkg_article(a, f"{i}") for i, a in enumerate(articles)))
    (out / FILE_NAMES["annotations"]).write_text(dump_annotations(annotations), encoding="utf-8")
    manifest = {role: FILE_NAMES[role] for role in ("ads", "baseline_ads", "articles", "annotations")}
    manifest["period"] = {"start": START.isoformat(), "end": END.isoformat()}
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, sort_keys=True)

    shutil.copyfile(DATA_ROOT / "gazetteer.psv", out / "gazetteer.psv")
    shutil.copyfile(DATA_ROOT / "events.psv", out / "events.psv")
    population = _population_frame()
    potential = _potential_frame()
    population.to_csv(out / "population.csv", index=False)
    potential.to_csv(out / "potential_audience.csv", index=False)
    _survey_frame(ads, baseline, potential, population).to_csv(out / "survey.csv", index=False)
    pd.DataFrame(truth, columns=["ad_id", "stance", "targeting", "block"]).to_csv(out / "truth.csv", index=False)

    config = {
        "dataset": MANIFEST_NAME,
        "gazetteer": "gazetteer.psv",
        "events": "events.psv",
        "potential_audience": "potential_audience.csv",
        "population": "population.csv",
        "survey": "survey.csv",
        "seed": seed,
        "period": {"start": START.isoformat(), "end": END.isoformat()},
        "agenda": {"period": {"start": START.isoformat(), "end": AGENDA_END.isoformat()}, "max_lag": 10},
        "train": {"grid_search": False, "folds": 10},
    }
    path = out / "adlens.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, sort_keys=True)
    logger.info(f"Wrote synthetic bundle ({len(archive)} archive lines, {len(baseline)} baseline ads, "
                f"{len(articles)} articles, {len(annotations)} annotations) to {out}")
    return path
