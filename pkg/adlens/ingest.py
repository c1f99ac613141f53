"""Parsers for Ads-Library-shaped JSON archives and GDELT GKG 2.1 files.

The ads archive holds one JSON object per line, using the public Ads Library
API key vocabulary (`id`, `page_id`, `ad_creative_body`, `impressions` with
`lower_bound`/`upper_bound`, `demographic_distribution`, ...). GKG files are
tab-delimited with the date at field 1, the DocumentIdentifier at field 4 and
V2Themes at field 8.
"""
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from fractions import Fraction
import json
from pathlib import Path
import re
import typing as tp

from loguru import logger
import pandas as pd

from .errors import ParseError, ValidationError

DATA_ROOT = Path(__file__).parent / 'data'

GENDERS = ("male", "female", "unknown")
AGE_BUCKETS = ("13-17", "18-24", "25-34", "35-44", "45-54", "55-64", "65+")
ADULT_BUCKETS = AGE_BUCKETS[1:]

# platform rounding on breakdown shares
SHARE_SUM_TOLERANCE = 0.02

GKG_DATE_FIELD = 1
GKG_URL_FIELD = 4
GKG_THEMES_FIELD = 8
GKG_MIN_FIELDS = 9

_TOKEN_RE = re.compile(r"\w+")
_DATETIME_FORMATS = ("%Y-%m-%dT%H:%M:%S%z", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d")


@dataclass(frozen=True)
class RangedValue:
    lower: int
    upper: tp.Optional[int] = None

    def __post_init__(self):
        if self.lower < 0 or (self.upper is not None and self.upper < 0):
            raise ValueError(f"negative bound in range [{self.lower}, {self.upper}]")
        if self.upper is not None and self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} above upper bound {self.upper}")


@dataclass(frozen=True)
class DemographicCell:
    gender: str
    age_bucket: str
    share: float


@dataclass(frozen=True)
class AdRecord:
    id: str
    page_id: str
    text: str
    created: datetime
    delivery_start: date
    impressions: RangedValue
    cost: RangedValue = RangedValue(0)
    title: tp.Optional[str] = None
    url: tp.Optional[str] = None
    page_name: tp.Optional[str] = None
    delivery_stop: tp.Optional[date] = None
    demographic_distribution: tp.Tuple[DemographicCell, ...] = ()
    region_distribution: tp.Tuple[tp.Tuple[str, float], ...] = ()
    snapshot_time: tp.Optional[datetime] = None
    # fraction of the original delivery days kept by a period filter
    in_period_share: Fraction = Fraction(1)


@dataclass(frozen=True)
class NewsArticle:
    date: date
    url: str
    themes: tp.Tuple[str, ...] = ()


@dataclass(frozen=True)
class ThemeCatalog:
    migration_themes: tp.FrozenSet[str]

    def __post_init__(self):
        if not self.migration_themes:
            raise ValidationError("theme catalog is empty")

    def __contains__(self, theme: str) -> bool:
        return theme in self.migration_themes


@dataclass(frozen=True)
class KeywordList:
    stems: tp.Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.stems:
            raise ValidationError("keyword list is empty")
        for stem in self.stems:
            if stem != stem.lower() or not stem or any(c.isspace() for c in stem):
                raise ValidationError(f"invalid keyword stem {stem!r}: stems are lowercase "
                                      "and contain no whitespace")


def midpoint(r: RangedValue) -> Fraction:
    """Average of the range end points, or the closed end point for open ranges."""
    if r.upper is None:
        return Fraction(r.lower)
    return Fraction(r.lower + r.upper, 2)


def estimated_impressions(ad: AdRecord) -> float:
    return float(midpoint(ad.impressions) * ad.in_period_share)


def _parse_datetime(value, field_name: str) -> datetime:
    if not isinstance(value, str):
        raise ParseError(f"expected a date string, got {value!r}", field=field_name)
    for fmt in _DATETIME_FORMATS:
        try:
            parsed = datetime.strptime(value, fmt)
        except ValueError:
            continue
        if parsed.tzinfo is not None:
            parsed = parsed.astimezone(timezone.utc).replace(tzinfo=None)
        return parsed
    raise ParseError(f"malformed date {value!r}", field=field_name)


def _format_datetime(value: datetime) -> str:
    return value.strftime("%Y-%m-%dT%H:%M:%S+0000")


def _parse_int(value, field_name: str) -> int:
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise ParseError(f"expected an integer, got {value!r}", field=field_name)
    if number < 0:
        raise ParseError(f"negative value {number}", field=field_name)
    return number


def _parse_range(raw, field_name: str) -> RangedValue:
    if not isinstance(raw, dict) or "lower_bound" not in raw:
        raise ParseError("range needs a lower_bound", field=field_name)
    lower = _parse_int(raw["lower_bound"], f"{field_name}.lower_bound")
    upper = raw.get("upper_bound")
    if upper is not None:
        upper = _parse_int(upper, f"{field_name}.upper_bound")
        if upper < lower:
            raise ParseError(f"upper bound {upper} below lower bound {lower}", field=field_name)
    return RangedValue(lower, upper)


def _parse_share(value, field_name: str, what: str) -> float:
    try:
        share = float(value)
    except (TypeError, ValueError):
        raise ParseError(f"share {value!r} is not a number for {what}", field=field_name)
    if not 0.0 <= share <= 1.0:
        raise ParseError(f"share {share} outside [0, 1] for {what}", field=field_name)
    return share


def _check_share_sum(shares: tp.Iterable[float], field_name: str):
    total = sum(shares)
    if total > 1.0 + SHARE_SUM_TOLERANCE:
        raise ParseError(f"shares sum to {total:.4f}, above 1 + {SHARE_SUM_TOLERANCE}",
                         field=field_name)


def _entries(raw, field_name: str) -> tp.Iterator[tp.Tuple[str, dict]]:
    if raw is None:
        return
    if not isinstance(raw, list):
        raise ParseError("distribution is not a list", field=field_name)
    for i, entry in enumerate(raw):
        name = f"{field_name}[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"entry {entry!r} is not an object", field=name)
        yield name, entry


def _parse_demographics(raw) -> tp.Tuple[DemographicCell, ...]:
    cells = []
    seen = set()
    for name, entry in _entries(raw, "demographic_distribution"):
        gender = entry.get("gender")
        age = entry.get("age")
        if gender not in GENDERS:
            raise ParseError(f"unknown gender {gender!r}", field=name)
        if age not in AGE_BUCKETS:
            raise ParseError(f"unknown age bucket {age!r}", field=name)
        if (gender, age) in seen:
            raise ParseError(f"duplicate cell {gender}/{age}", field=name)
        seen.add((gender, age))
        share = _parse_share(entry.get("percentage"), name, f"cell {gender}/{age}")
        cells.append(DemographicCell(gender, age, share))
    _check_share_sum((c.share for c in cells), "demographic_distribution")
    return tuple(cells)


def _parse_regions(raw) -> tp.Tuple[tp.Tuple[str, float], ...]:
    regions = []
    seen = set()
    for name, entry in _entries(raw, "region_distribution"):
        region = entry.get("region")
        if not isinstance(region, str) or not region:
            raise ParseError("missing region name", field=name)
        if region in seen:
            raise ParseError(f"duplicate region {region!r}", field=name)
        seen.add(region)
        regions.append((region, _parse_share(entry.get("percentage"), name, f"region {region}")))
    _check_share_sum((share for _, share in regions), "region_distribution")
    return tuple(regions)


def _parse_fraction(value) -> Fraction:
    try:
        share = Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"malformed fraction {value!r}", field="in_period_share")
    if not 0 < share <= 1:
        raise ParseError(f"in-period share {share} outside (0, 1]", field="in_period_share")
    return share


def parse_ad_record(raw: dict) -> AdRecord:
    """Build an `AdRecord` from one archive object, enforcing its invariants."""
    if not isinstance(raw, dict):
        raise ParseError("ad record is not a JSON object")
    for key in ("id", "page_id", "impressions", "ad_delivery_start_time"):
        if raw.get(key) in (None, ""):
            raise ParseError(f"missing mandatory field {key}", field=key)

    delivery_start = _parse_datetime(raw["ad_delivery_start_time"], "ad_delivery_start_time").date()
    delivery_stop = None
    if raw.get("ad_delivery_stop_time"):
        delivery_stop = _parse_datetime(raw["ad_delivery_stop_time"], "ad_delivery_stop_time").date()
        if delivery_stop < delivery_start:
            raise ParseError(f"delivery stops ({delivery_stop}) before it starts ({delivery_start})",
                             field="ad_delivery_stop_time")
    if raw.get("ad_creation_time"):
        created = _parse_datetime(raw["ad_creation_time"], "ad_creation_time")
    else:
        created = datetime.combine(delivery_start, datetime.min.time())
    snapshot_time = created
    if raw.get("snapshot_time"):
        snapshot_time = _parse_datetime(raw["snapshot_time"], "snapshot_time")

    cost = RangedValue(0)
    if raw.get("spend") is not None:
        cost = _parse_range(raw["spend"], "spend")

    return AdRecord(
        id=str(raw["id"]),
        page_id=str(raw["page_id"]),
        page_name=raw.get("page_name"),
        text=raw.get("ad_creative_body") or "",
        title=raw.get("ad_creative_link_title"),
        url=raw.get("ad_snapshot_url"),
        created=created,
        delivery_start=delivery_start,
        delivery_stop=delivery_stop,
        cost=cost,
        impressions=_parse_range(raw["impressions"], "impressions"),
        demographic_distribution=_parse_demographics(raw.get("demographic_distribution")),
        region_distribution=_parse_regions(raw.get("region_distribution")),
        snapshot_time=snapshot_time,
        in_period_share=_parse_fraction(raw.get("in_period_share", 1)),
    )


def _range_to_json(r: RangedValue) -> dict:
    out = {"lower_bound": str(r.lower)}
    if r.upper is not None:
        out["upper_bound"] = str(r.upper)
    return out


def ad_to_json(ad: AdRecord) -> dict:
    """Inverse of `parse_ad_record`."""
    out = {
        "id": ad.id,
        "page_id": ad.page_id,
        "ad_creative_body": ad.text,
        "ad_creation_time": _format_datetime(ad.created),
        "ad_delivery_start_time": ad.delivery_start.isoformat(),
        "spend": _range_to_json(ad.cost),
        "impressions": _range_to_json(ad.impressions),
        "demographic_distribution": [
            {"gender": c.gender, "age": c.age_bucket, "percentage": repr(float(c.share))}
            for c in ad.demographic_distribution],
        "region_distribution": [
            {"region": region, "percentage": repr(float(share))} for region, share in ad.region_distribution],
    }
    if ad.page_name is not None:
        out["page_name"] = ad.page_name
    if ad.title is not None:
        out["ad_creative_link_title"] = ad.title
    if ad.url is not None:
        out["ad_snapshot_url"] = ad.url
    if ad.delivery_stop is not None:
        out["ad_delivery_stop_time"] = ad.delivery_stop.isoformat()
    if ad.snapshot_time is not None:
        out["snapshot_time"] = _format_datetime(ad.snapshot_time)
    if ad.in_period_share != 1:
        out["in_period_share"] = str(ad.in_period_share)
    return out


def dump_ad_line(ad: AdRecord) -> str:
    return json.dumps(ad_to_json(ad), sort_keys=True, ensure_ascii=False)


def _numbered_lines(path: Path) -> tp.Iterator[tp.Tuple[int, str]]:
    """Non-blank lines of a UTF-8 file with their 1-based numbers."""
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as error:
                raise ParseError(f"invalid UTF-8 at byte {error.start}", path=str(path), line=lineno)
            if line.strip():
                yield lineno, line


def read_ads_archive(path: tp.Union[str, Path]) -> tp.List[AdRecord]:
    """Parse a newline-delimited ads archive. Blank lines are skipped."""
    path = Path(path)
    ads = []
    for lineno, line in _numbered_lines(path):
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as error:
            raise ParseError(f"malformed JSON record: {error.msg}", path=str(path), line=lineno)
        try:
            ads.append(parse_ad_record(raw))
        except ParseError as error:
            raise error.located(str(path), lineno)
    logger.debug(f"Read {len(ads)} ads from {path}")
    return ads


def parse_gkg_line(line: str) -> NewsArticle:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) < GKG_MIN_FIELDS:
        raise ParseError(f"GKG record has {len(fields)} fields, expected at least {GKG_MIN_FIELDS}")
    stamp = fields[GKG_DATE_FIELD]
    if len(stamp) != 14 or not stamp.isdigit():
        raise ParseError(f"malformed GKG date {stamp!r}", field="DATE")
    try:
        day = datetime.strptime(stamp, "%Y%m%d%H%M%S").date()
    except ValueError:
        raise ParseError(f"malformed GKG date {stamp!r}", field="DATE")
    themes = []
    for entry in fields[GKG_THEMES_FIELD].split(";"):
        if entry:
            themes.append(entry.split(",", 1)[0])
    return NewsArticle(date=day, url=fields[GKG_URL_FIELD], themes=tuple(themes))


def serialize_gkg_article(article: NewsArticle, record_id: str = "") -> str:
    """Render an article as a minimal GKG 2.1 line (nine fields)."""
    entries = []
    offset = 0
    for theme in article.themes:
        entries.append(f"{theme},{offset}")
        offset += len(theme) + 1
    fields = [""] * GKG_MIN_FIELDS
    fields[0] = record_id
    fields[GKG_DATE_FIELD] = article.date.strftime("%Y%m%d") + "000000"
    fields[2] = "1"
    fields[GKG_URL_FIELD] = article.url
    fields[GKG_THEMES_FIELD] = ";".join(entries)
    return "\t".join(fields)


def read_gkg_file(path: tp.Union[str, Path]) -> tp.List[NewsArticle]:
    path = Path(path)
    articles = []
    for lineno, line in _numbered_lines(path):
        try:
            articles.append(parse_gkg_line(line))
        except ParseError as error:
            raise error.located(str(path), lineno)
    logger.debug(f"Read {len(articles)} articles from {path}")
    return articles


def tokens(text: str) -> tp.List[str]:
    return _TOKEN_RE.findall(text.lower())


def keyword_filter(ads: tp.Sequence[AdRecord], keywords: KeywordList) -> tp.List[AdRecord]:
    """Keep ads whose text or title holds a token starting with one of the stems."""
    stems = tuple(keywords.stems)
    kept = []
    for ad in ads:
        words = tokens(ad.text) + tokens(ad.title or "")
        if any(word.startswith(stems) for word in words):
            kept.append(ad)
    return kept


def migration_theme_count(article: NewsArticle, catalog: ThemeCatalog) -> tp.Tuple[int, int]:
    migration = sum(1 for theme in article.themes if theme in catalog)
    return migration, len(article.themes)


def read_list_file(path: tp.Union[str, Path]) -> tp.List[str]:
    """Plain-text list, one entry per line, `#` starts a comment."""
    entries = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(line)
    return entries


def load_keyword_list(path: tp.Optional[tp.Union[str, Path]] = None) -> KeywordList:
    return KeywordList(tuple(read_list_file(path or DATA_ROOT / 'keywords.txt')))


def normalize_theme_name(name: str) -> str:
    """'Tax Fncact Immigrants' -> 'TAX_FNCACT_IMMIGRANTS'."""
    return "_".join(re.split(r"[\s_]+", name.strip().upper()))


def load_theme_catalog(path: tp.Optional[tp.Union[str, Path]] = None) -> ThemeCatalog:
    names = read_list_file(path or DATA_ROOT / 'themes.txt')
    return ThemeCatalog(frozenset(normalize_theme_name(name) for name in names))


def load_events(path: tp.Optional[tp.Union[str, Path]] = None) -> tp.List[tp.Tuple[date, str]]:
    """Dated event markers from a `date|label` file, sorted by date."""
    path = path or DATA_ROOT / 'events.psv'
    frame = pd.read_csv(path, sep="|", dtype=str, keep_default_na=False, comment="#")
    if list(frame.columns) != ["date", "label"]:
        raise ParseError(f"expected columns date|label, got {'|'.join(frame.columns)}", path=str(path))
    events = []
    for lineno, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            day = date.fromisoformat(row.date.strip())
        except ValueError:
            raise ParseError(f"bad event date {row.date!r}", path=str(path), line=lineno, field="date")
        events.append((day, row.label.strip()))
    return sorted(events)
