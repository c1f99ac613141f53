"""Demographic impression analytics.

Per-cell impressions use the midpoint estimate of each ad's impression range,
scaled by its in-period share and split by the reported gender x age shares.
"""
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
import math
from pathlib import Path
import typing as tp

from loguru import logger
import numpy as np
import pandas as pd

from .entities import PARTIES, PageEntity
from .errors import DataError, UndefinedResultError, ValidationError
from .ingest import (ADULT_BUCKETS, AGE_BUCKETS, DATA_ROOT, GENDERS, AdRecord,
                     estimated_impressions, read_list_file)
from .utils import stable_sum

COARSE_BUCKETS = {
    "18-34": ("18-24", "25-34"),
    "35-64": ("35-44", "45-54", "55-64"),
    "65+": ("65+",),
}
MALE_ONLY = "male_only"
FEMALE_ONLY = "female_only"
NOT_EXCLUSIVE = "none"

Group = tp.Tuple[str, str]


def load_regions(path: tp.Optional[tp.Union[str, Path]] = None) -> tp.Tuple[str, ...]:
    regions = tuple(read_list_file(path or DATA_ROOT / 'regions.txt'))
    if len(set(regions)) != len(regions):
        raise ValidationError("region list holds duplicates")
    return regions


class ImpressionMatrix:
    """Estimated impressions by gender (rows) and age bucket (columns)."""

    def __init__(self, cells: np.ndarray, ads_count: int):
        cells = np.asarray(cells, dtype=float)
        if cells.shape != (len(GENDERS), len(AGE_BUCKETS)):
            raise ValueError(f"impression matrix must be {len(GENDERS)}x{len(AGE_BUCKETS)}")
        if (cells < 0).any():
            raise ValueError("impression matrix cells must be non-negative")
        self.cells = cells
        self.ads_count = ads_count

    def cell(self, gender: str, age_bucket: str) -> float:
        return float(self.cells[GENDERS.index(gender), AGE_BUCKETS.index(age_bucket)])

    def gender_total(self, gender: str) -> float:
        return math.fsum(self.cells[GENDERS.index(gender)])

    @property
    def total(self) -> float:
        return math.fsum(self.cells.ravel())

    def __add__(self, other: "ImpressionMatrix") -> "ImpressionMatrix":
        return ImpressionMatrix(self.cells + other.cells, self.ads_count + other.ads_count)

    def groups(self, drop_unknown_gender: bool = True) -> tp.Dict[Group, float]:
        return {(g, a): self.cell(g, a) for g in GENDERS for a in AGE_BUCKETS
                if not (drop_unknown_gender and g == "unknown")}

    def to_frame(self, drop_unknown_gender: bool = False) -> pd.DataFrame:
        rows = []
        for gender in GENDERS:
            if drop_unknown_gender and gender == "unknown":
                continue
            for age in AGE_BUCKETS:
                rows.append({"gender": gender, "age": age, "impressions": self.cell(gender, age)})
        return pd.DataFrame(rows, columns=["gender", "age", "impressions"])


def impressions_by_demographic(ads: tp.Iterable[AdRecord], drop_unknown_gender: bool = False) -> ImpressionMatrix:
    parts: tp.Dict[Group, tp.List[float]] = {}
    count = 0
    for ad in ads:
        count += 1
        estimate = estimated_impressions(ad)
        for cell in ad.demographic_distribution:
            if drop_unknown_gender and cell.gender == "unknown":
                continue
            parts.setdefault((cell.gender, cell.age_bucket), []).append(estimate * cell.share)
    cells = np.zeros((len(GENDERS), len(AGE_BUCKETS)))
    for (gender, age), values in parts.items():
        cells[GENDERS.index(gender), AGE_BUCKETS.index(age)] = stable_sum(values)
    return ImpressionMatrix(cells, count)


@dataclass(frozen=True)
class OddsResult:
    value: float
    defined: bool = True
    ratio: tp.Optional[Fraction] = None
    reason: str = ""


def gender_odds(m: ImpressionMatrix) -> OddsResult:
    """Male over female impressions of one group."""
    male, female = m.gender_total("male"), m.gender_total("female")
    if male <= 0 or female <= 0:
        return OddsResult(float("nan"), False, reason="zero male or female impressions")
    ratio = Fraction(male) / Fraction(female)
    return OddsResult(float(ratio), True, ratio)


def gender_odds_ratio(a: ImpressionMatrix, b: ImpressionMatrix) -> OddsResult:
    """(male_a / female_a) / (male_b / female_b), computed exactly."""
    odds_a, odds_b = gender_odds(a), gender_odds(b)
    if not (odds_a.defined and odds_b.defined):
        return OddsResult(float("nan"), False, reason="zero male or female impressions")
    ratio = odds_a.ratio / odds_b.ratio
    return OddsResult(float(ratio), True, ratio)


@dataclass(frozen=True)
class TargetingProfile:
    regions_reached: int
    age_buckets_reached: tp.FrozenSet[str]
    gender_exclusive: str
    unknown_regions: tp.Tuple[str, ...] = ()


def detect_targeting(ad: AdRecord, regions: tp.Sequence[str] = None, epsilon: float = 0.0) -> TargetingProfile:
    regions = set(regions if regions is not None else load_regions())
    reached = 0
    unknown = []
    for region, share in ad.region_distribution:
        if share <= epsilon:
            continue
        if region in regions:
            reached += 1
        else:
            unknown.append(region)
    per_bucket: tp.Dict[str, float] = Counter()
    per_gender: tp.Dict[str, float] = Counter()
    for cell in ad.demographic_distribution:
        per_bucket[cell.age_bucket] += cell.share
        per_gender[cell.gender] += cell.share
    buckets = frozenset(bucket for bucket, share in per_bucket.items() if share > epsilon)
    male, female = per_gender["male"] > epsilon, per_gender["female"] > epsilon
    if male and not female:
        exclusive = MALE_ONLY
    elif female and not male:
        exclusive = FEMALE_ONLY
    else:
        exclusive = NOT_EXCLUSIVE
    return TargetingProfile(reached, buckets, exclusive, tuple(sorted(unknown)))


def is_untargeted(profile: TargetingProfile, region_count: int) -> bool:
    # minors are excluded from political ads, so 13-17 may be missing
    return (profile.regions_reached == region_count
            and set(ADULT_BUCKETS) <= profile.age_buckets_reached
            and profile.gender_exclusive == NOT_EXCLUSIVE)


@dataclass(frozen=True, eq=False)
class TargetingSummary:
    targeted_share: float
    untargeted_share: float
    targeted_impressions: float
    untargeted_impressions: float
    targeted_ads: int
    untargeted_ads: int
    regions_histogram: pd.DataFrame
    buckets_histogram: pd.DataFrame
    unknown_regions: tp.Dict[str, int] = field(default_factory=dict)
    defined: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"group": "targeted", "ads": self.targeted_ads, "impressions": self.targeted_impressions,
             "impression_share": self.targeted_share},
            {"group": "untargeted", "ads": self.untargeted_ads, "impressions": self.untargeted_impressions,
             "impression_share": self.untargeted_share}])


def _histogram(keys: tp.Sequence[int], impressions: tp.Sequence[float], size: int, column: str) -> pd.DataFrame:
    ads = [0] * (size + 1)
    parts: tp.List[tp.List[float]] = [[] for _ in range(size + 1)]
    for key, value in zip(keys, impressions):
        ads[key] += 1
        parts[key].append(value)
    return pd.DataFrame({column: list(range(size + 1)), "ads": ads,
                         "impressions": [stable_sum(p) for p in parts]})


def targeting_summary(ads: tp.Iterable[AdRecord], regions: tp.Sequence[str] = None,
                      epsilon: float = 0.0) -> TargetingSummary:
    regions = tuple(regions if regions is not None else load_regions())
    profiles = []
    impressions = []
    for ad in ads:
        profiles.append(detect_targeting(ad, regions, epsilon))
        impressions.append(estimated_impressions(ad))
    flags = [is_untargeted(p, len(regions)) for p in profiles]
    untargeted = stable_sum(v for v, flag in zip(impressions, flags) if flag)
    targeted = stable_sum(v for v, flag in zip(impressions, flags) if not flag)
    total = stable_sum(impressions)
    unknown = Counter(region for p in profiles for region in p.unknown_regions)
    if unknown:
        logger.warning(f"{sum(unknown.values())} region entries outside the canonical list: "
                       f"{sorted(unknown)}")
    return TargetingSummary(
        targeted_share=targeted / total if total > 0 else 0.0,
        untargeted_share=untargeted / total if total > 0 else 0.0,
        targeted_impressions=targeted, untargeted_impressions=untargeted,
        targeted_ads=flags.count(False), untargeted_ads=flags.count(True),
        regions_histogram=_histogram([p.regions_reached for p in profiles], impressions,
                                     len(regions), "regions_reached"),
        buckets_histogram=_histogram([len(p.age_buckets_reached) for p in profiles], impressions,
                                     len(AGE_BUCKETS), "age_buckets_reached"),
        unknown_regions=dict(sorted(unknown.items())),
        defined=total > 0)


@dataclass(frozen=True)
class PotentialAudience:
    counts: tp.Dict[str, tp.Dict[Group, float]]

    def __post_init__(self):
        for party, groups in self.counts.items():
            for group, value in groups.items():
                if value < 0:
                    raise ValidationError(f"negative potential audience for {party} {group}")

    def for_party(self, party: str) -> tp.Dict[Group, float]:
        if party not in self.counts:
            raise DataError(f"no potential audience for party {party}")
        return self.counts[party]


@dataclass(frozen=True)
class PopulationShares:
    shares: tp.Dict[Group, float]

    def __post_init__(self):
        if any(value < 0 for value in self.shares.values()):
            raise ValidationError("population shares must be non-negative")
        total = stable_sum(self.shares.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"population shares sum to {total}, expected 1")


@dataclass(frozen=True)
class SurveyDistribution:
    shares: tp.Dict[str, tp.Dict[str, float]]

    def __post_init__(self):
        for party, buckets in self.shares.items():
            unknown = set(buckets) - set(COARSE_BUCKETS)
            if unknown:
                raise ValidationError(f"survey buckets {sorted(unknown)} for {party} are not "
                                      f"one of {list(COARSE_BUCKETS)}")
            total = stable_sum(buckets.values())
            if abs(total - 1.0) > 1e-6:
                raise ValidationError(f"survey shares for {party} sum to {total}, expected 1")


def _read_table(path, columns: tp.Sequence[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={c: str for c in columns[:-1]}, keep_default_na=False)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path} lacks columns {missing}")
    return frame


def load_potential_audience(path) -> PotentialAudience:
    counts: tp.Dict[str, tp.Dict[Group, float]] = {}
    for row in _read_table(path, ("party", "gender", "age", "users")).itertuples(index=False):
        counts.setdefault(row.party, {})[(row.gender, row.age)] = float(row.users)
    return PotentialAudience(counts)


def load_population(path) -> PopulationShares:
    frame = _read_table(path, ("gender", "age", "share"))
    return PopulationShares({(row.gender, row.age): float(row.share) for row in frame.itertuples(index=False)})


def load_survey(path) -> SurveyDistribution:
    shares: tp.Dict[str, tp.Dict[str, float]] = {}
    for row in _read_table(path, ("party", "bucket", "share")).itertuples(index=False):
        shares.setdefault(row.party, {})[row.bucket] = float(row.share)
    return SurveyDistribution(shares)


def normalize_to_population(impressions: tp.Mapping[Group, float], potential: tp.Mapping[Group, float],
                            population: PopulationShares) -> tp.Dict[Group, float]:
    """Rescale each group by P_g / F_g, then renormalize to sum 1."""
    scaled = {}
    for group, value in impressions.items():
        if value == 0:
            scaled[group] = 0.0
            continue
        audience = potential.get(group, 0.0)
        if audience <= 0:
            raise DataError(f"zero potential audience for group {'/'.join(group)} with "
                            f"{value} impressions")
        if group not in population.shares:
            raise DataError(f"no population share for group {'/'.join(group)}")
        scaled[group] = value * population.shares[group] / audience
    total = stable_sum(scaled.values())
    if total <= 0:
        raise UndefinedResultError("no impressions left to normalize")
    return {group: value / total for group, value in scaled.items()}


def age_distribution(source: tp.Union[ImpressionMatrix, tp.Mapping[Group, float]]) -> tp.Dict[str, float]:
    """Shares over the seven age buckets, genders summed."""
    groups = source.groups(drop_unknown_gender=False) if isinstance(source, ImpressionMatrix) else source
    per_bucket = {age: stable_sum(v for (_, a), v in groups.items() if a == age) for age in AGE_BUCKETS}
    total = stable_sum(per_bucket.values())
    if total <= 0:
        return {age: 0.0 for age in AGE_BUCKETS}
    return {age: value / total for age, value in per_bucket.items()}


@dataclass(frozen=True)
class CoarseDistribution:
    shares: tp.Dict[str, float]
    defined: bool = True


def coarsen_age_buckets(d: tp.Mapping[str, float]) -> CoarseDistribution:
    """Seven buckets to 18-34 / 35-64 / 65+, dropping 13-17 and renormalizing."""
    merged = {coarse: stable_sum(d.get(b, 0.0) for b in fine) for coarse, fine in COARSE_BUCKETS.items()}
    total = stable_sum(merged.values())
    if total <= 0:
        return CoarseDistribution({coarse: 0.0 for coarse in COARSE_BUCKETS}, defined=False)
    return CoarseDistribution({coarse: value / total for coarse, value in merged.items()})


def tv_distance(p: tp.Mapping[str, float], q: tp.Mapping[str, float]) -> float:
    keys = sorted(set(p) | set(q))
    return 0.5 * stable_sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass(frozen=True, eq=False)
class SurveyComparison:
    table: pd.DataFrame
    distances: pd.DataFrame


def compare_to_survey(ads_all: tp.Mapping[str, tp.Mapping[str, float]],
                      ads_migration: tp.Mapping[str, tp.Mapping[str, float]],
                      survey: SurveyDistribution) -> SurveyComparison:
    """Side-by-side coarse age shares per party and the pairwise total-variation distances.

    Parties missing from a source keep their row with that source empty and are flagged.
    """
    sources = {"ads_all": ads_all, "ads_migration": ads_migration, "survey": survey.shares}
    parties = sorted(set(ads_all) | set(ads_migration) | set(survey.shares))
    rows = []
    distances = []
    for party in parties:
        complete = all(party in source for source in sources.values())
        for bucket in COARSE_BUCKETS:
            row = {"party": party, "bucket": bucket}
            for name, source in sources.items():
                row[name] = source[party].get(bucket, 0.0) if party in source else float("nan")
            row["complete"] = complete
            rows.append(row)

        def distance(a, b):
            if party in sources[a] and party in sources[b]:
                return tv_distance(sources[a][party], sources[b][party])
            return float("nan")

        distances.append({"party": party,
                          "tv_all_survey": distance("ads_all", "survey"),
                          "tv_migration_survey": distance("ads_migration", "survey"),
                          "tv_all_migration": distance("ads_all", "ads_migration"),
                          "complete": complete})
    return SurveyComparison(pd.DataFrame(rows), pd.DataFrame(distances))


def party_stance_table(ads: tp.Iterable[AdRecord], pages: tp.Iterable[PageEntity],
                       stances: tp.Mapping[str, str]) -> pd.DataFrame:
    """Ads and estimated impressions per party and stance, the five major parties only."""
    party_of = {page.page_id: page.party_affiliation for page in pages}
    counts: tp.Dict[tp.Tuple[str, str], int] = Counter()
    parts: tp.Dict[tp.Tuple[str, str], tp.List[float]] = {}
    for ad in ads:
        party = party_of.get(ad.page_id)
        if party not in PARTIES or ad.id not in stances:
            continue
        stance = stances[ad.id]
        key = (party, getattr(stance, "value", stance))
        counts[key] += 1
        parts.setdefault(key, []).append(estimated_impressions(ad))
    rows = [{"party": party, "stance": stance, "ads": counts[(party, stance)],
             "impressions": stable_sum(parts[(party, stance)])}
            for party, stance in sorted(counts, key=lambda k: (PARTIES.index(k[0]), k[1]))]
    return pd.DataFrame(rows, columns=["party", "stance", "ads", "impressions"])
