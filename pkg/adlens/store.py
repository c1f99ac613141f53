"""Immutable dataset catalog: loading, deduplication, period filtering and persistence.

A dataset lives in a directory next to a YAML manifest naming its members by
role (`ads`, `baseline_ads`, `pages`, `articles`, `annotations`) and,
optionally, the period it was restricted to.
"""
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from fractions import Fraction
import json
from pathlib import Path
import typing as tp

from loguru import logger
import yaml

from . import annotation, ingest
from .entities import UNRESOLVED, PageEntity, page_names
from .errors import DataError, ValidationError

ROLES = ("ads", "baseline_ads", "pages", "articles", "annotations")
FILE_NAMES = {
    "ads": "ads.jsonl",
    "baseline_ads": "baseline_ads.jsonl",
    "pages": "pages.jsonl",
    "articles": "articles.gkg",
    "annotations": "annotations.psv",
}
MANIFEST_NAME = "manifest.yaml"
# the archive was crawled once, on this day
COLLECTION_DATE = date(2020, 3, 30)

PathLike = tp.Union[str, Path]


@dataclass(frozen=True)
class PeriodFilter:
    start_date: date
    end_date: date

    def __post_init__(self):
        if self.start_date > self.end_date:
            raise ValidationError(f"period starts ({self.start_date}) after it ends ({self.end_date})")

    def __contains__(self, day: date) -> bool:
        return self.start_date <= day <= self.end_date

    def intersect(self, other: "PeriodFilter") -> tp.Optional["PeriodFilter"]:
        start = max(self.start_date, other.start_date)
        end = min(self.end_date, other.end_date)
        return PeriodFilter(start, end) if start <= end else None


@dataclass(frozen=True)
class Dataset:
    ads: tp.Tuple[ingest.AdRecord, ...] = ()
    pages: tp.Tuple[PageEntity, ...] = ()
    articles: tp.Tuple[ingest.NewsArticle, ...] = ()
    annotations: tp.Tuple[annotation.AnnotationRecord, ...] = ()
    baseline_ads: tp.Tuple[ingest.AdRecord, ...] = ()
    diagnostics: tp.Tuple[str, ...] = ()
    provenance: tp.Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("ads", "pages", "articles", "annotations", "baseline_ads", "diagnostics"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("ads", "baseline_ads"):
            ids = [ad.id for ad in getattr(self, name)]
            if len(ids) != len(set(ids)):
                raise DataError(f"{name} contain duplicate ad ids, run dedup_ads first")
        # every page referenced by an ad gets an entity, unresolved when unknown
        known = {page.page_id for page in self.pages}
        everything = self.ads + self.baseline_ads
        missing = sorted({ad.page_id for ad in everything} - known)
        if missing:
            names = page_names(everything)
            placeholders = tuple(PageEntity(page_id, names.get(page_id, "")) for page_id in missing)
            pages = sorted(self.pages + placeholders, key=lambda page: page.page_id)
            object.__setattr__(self, "pages", tuple(pages))

    @property
    def page_index(self) -> tp.Dict[str, PageEntity]:
        return {page.page_id: page for page in self.pages}

    @property
    def unresolved_pages(self) -> tp.List[str]:
        return [page.page_id for page in self.pages if page.actor_type == UNRESOLVED]

    def texts(self) -> tp.Dict[str, str]:
        return {ad.id: ad.text for ad in self.baseline_ads + self.ads}


def dedup_ads(ads: tp.Iterable[ingest.AdRecord]) -> tp.List[ingest.AdRecord]:
    """One record per ad id, the latest snapshot winning, sorted by id."""
    latest: tp.Dict[str, ingest.AdRecord] = {}
    for ad in ads:
        known = latest.get(ad.id)
        if known is None or _snapshot_key(ad) > _snapshot_key(known):
            latest[ad.id] = ad
    return [latest[ad_id] for ad_id in sorted(latest)]


def _snapshot_key(ad: ingest.AdRecord):
    # equal timestamps fall back to the serialized record so the winner is order independent
    return (ad.snapshot_time or ad.created, ingest.dump_ad_line(ad))


def _delivery_stop(ad: ingest.AdRecord, collection_date: date) -> date:
    stop = ad.delivery_stop or collection_date
    return max(stop, ad.delivery_start)


def clip_ad(ad: ingest.AdRecord, period: PeriodFilter,
            collection_date: date = COLLECTION_DATE) -> tp.Optional[ingest.AdRecord]:
    """Clip the delivery window to `period`, or None when they do not intersect."""
    start = ad.delivery_start
    stop = _delivery_stop(ad, collection_date)
    if stop < period.start_date or start > period.end_date:
        return None
    clipped_start = max(start, period.start_date)
    clipped_stop = min(stop, period.end_date)
    if (clipped_start, clipped_stop) == (start, stop):
        return ad
    kept = Fraction((clipped_stop - clipped_start).days + 1, (stop - start).days + 1)
    return replace(ad, delivery_start=clipped_start, delivery_stop=clipped_stop,
                   in_period_share=ad.in_period_share * kept)


def filter_period(d: Dataset, f: PeriodFilter, collection_date: date = COLLECTION_DATE) -> Dataset:
    def clip_all(ads):
        clipped = (clip_ad(ad, f, collection_date) for ad in ads)
        return tuple(ad for ad in clipped if ad is not None)

    return replace(d,
                   ads=clip_all(d.ads),
                   baseline_ads=clip_all(d.baseline_ads),
                   articles=tuple(a for a in d.articles if a.date in f))


@dataclass(frozen=True)
class Manifest:
    members: tp.Dict[str, tp.List[Path]]
    period: tp.Optional[PeriodFilter] = None


def as_date(value, key: str) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise ValidationError(f"{key} is not a YYYY-MM-DD date: {value!r}")


def parse_period(raw: tp.Optional[tp.Mapping], key: str = "period") -> tp.Optional[PeriodFilter]:
    if raw is None:
        return None
    if not isinstance(raw, dict) or set(raw) != {"start", "end"}:
        raise ValidationError(f"{key} needs exactly the keys start and end")
    return PeriodFilter(as_date(raw["start"], f"{key}.start"), as_date(raw["end"], f"{key}.end"))


def load_manifest(path: PathLike) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing manifest {path}")
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ValidationError(f"manifest {path} is not a mapping")
    members: tp.Dict[str, tp.List[Path]] = {}
    for key, value in raw.items():
        if key == "period":
            continue
        if key not in ROLES:
            raise ValidationError(f"unknown dataset role {key!r} in {path}")
        entries = value if isinstance(value, list) else [value]
        members[key] = [path.parent / str(entry) for entry in entries]
    return Manifest(members, parse_period(raw.get("period")))


def _read_pages(path: Path) -> tp.List[PageEntity]:
    pages = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                pages.append(PageEntity(**json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValueError) as error:
                raise DataError(f"malformed page record ({error}) (file={path}, line={lineno})")
    return pages


def load_dataset(paths: tp.Union[PathLike, tp.Mapping[str, tp.Union[PathLike, tp.Sequence[PathLike]]]]) -> Dataset:
    """Load a dataset from a manifest file or a role to path(s) mapping.

    Any missing or malformed member aborts the whole load.
    """
    if isinstance(paths, (str, Path)):
        members = load_manifest(paths).members
    else:
        members = {}
        for role, value in paths.items():
            if role not in ROLES:
                raise ValidationError(f"unknown dataset role {role!r}")
            entries = [value] if isinstance(value, (str, Path)) else list(value)
            members[role] = [Path(entry) for entry in entries]

    provenance = []
    for entries in members.values():
        for member in entries:
            if not member.is_file():
                raise DataError(f"missing dataset file {member}")
            provenance.append(f"{member}@{datetime.now().isoformat(timespec='seconds')}")

    def read(role, reader):
        return [record for member in members.get(role, []) for record in reader(member)]

    raw_ads = read("ads", ingest.read_ads_archive)
    raw_baseline = read("baseline_ads", ingest.read_ads_archive)
    ads = dedup_ads(raw_ads)
    baseline = dedup_ads(raw_baseline)
    annotations = read("annotations", annotation.load_annotations)
    annotation.check_unique(annotations)

    diagnostics = []
    collapsed = len(raw_ads) + len(raw_baseline) - len(ads) - len(baseline)
    if collapsed:
        diagnostics.append(f"collapsed {collapsed} duplicate ad snapshots")
    pages = read("pages", _read_pages)
    known = {page.page_id for page in pages}
    for page_id in sorted({ad.page_id for ad in ads + baseline} - known):
        diagnostics.append(f"page {page_id} has no page entity")

    dataset = Dataset(ads=ads, pages=pages, articles=read("articles", ingest.read_gkg_file),
                      annotations=annotations, baseline_ads=baseline,
                      diagnostics=tuple(diagnostics), provenance=tuple(provenance))
    logger.info(f"Loaded {len(dataset.ads)} ads, {len(dataset.baseline_ads)} baseline ads, "
                f"{len(dataset.articles)} articles, {len(dataset.annotations)} annotations")
    return dataset


def _write_lines(path: Path, lines: tp.Iterable[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


def _page_line(page: PageEntity) -> str:
    return json.dumps({"page_id": page.page_id, "name": page.name, "actor_type": page.actor_type,
                       "party_affiliation": page.party_affiliation,
                       "matched_ngram": page.matched_ngram}, sort_keys=True, ensure_ascii=False)


def save_dataset(d: Dataset, directory: PathLike, period: tp.Optional[PeriodFilter] = None) -> Path:
    """Write every member and the manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_lines(directory / FILE_NAMES["ads"], map(ingest.dump_ad_line, d.ads))
    _write_lines(directory / FILE_NAMES["baseline_ads"], map(ingest.dump_ad_line, d.baseline_ads))
    _write_lines(directory / FILE_NAMES["pages"], map(_page_line, d.pages))
    _write_lines(directory / FILE_NAMES["articles"],
                 (ingest.serialize_gkg_article(a, f"{i}") for i, a in enumerate(d.articles)))
    (directory / FILE_NAMES["annotations"]).write_text(
        annotation.dump_annotations(d.annotations), encoding="utf-8")

    manifest: tp.Dict[str, tp.Any] = dict(FILE_NAMES)
    if period is not None:
        manifest["period"] = {"start": period.start_date.isoformat(), "end": period.end_date.isoformat()}
    path = directory / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, sort_keys=True)
    return path
