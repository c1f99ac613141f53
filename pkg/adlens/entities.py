"""Advertiser resolution against an offline gazetteer.

Page names are broken into contiguous word n-grams; the longest n-gram with a
gazetteer hit decides the actor type and party, the leftmost one among equally
long hits.
"""
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
import re
import typing as tp

from loguru import logger
import pandas as pd

from .errors import GazetteerError
from .ingest import DATA_ROOT, AdRecord, estimated_impressions
from .utils import stable_sum

ACTOR_TYPES = ("party", "politician", "ngo", "university", "trade_union",
               "journalist_or_news", "fact_checker", "other")
UNRESOLVED = "unresolved"
PARTIES = ("PD", "Lega", "M5S", "FdI", "IV")
NO_PARTY = "none"
GAZETTEER_COLUMNS = ("surface_form", "actor_type", "party_affiliation")

_PUNCT_RE = re.compile(r"[^\w\s]|_")


def normalize_name(name: str) -> str:
    """Lowercase, punctuation to spaces, whitespace collapsed. Diacritics are kept."""
    return " ".join(_PUNCT_RE.sub(" ", name.lower()).split())


@dataclass(frozen=True)
class GazetteerEntry:
    surface_form: str
    actor_type: str
    party_affiliation: str = NO_PARTY

    def __post_init__(self):
        if not self.surface_form or self.surface_form != normalize_name(self.surface_form):
            raise GazetteerError(f"surface form {self.surface_form!r} is not normalized")
        if self.actor_type not in ACTOR_TYPES:
            raise GazetteerError(f"unknown actor type {self.actor_type!r} for {self.surface_form!r}")
        if self.party_affiliation not in PARTIES + (NO_PARTY,):
            raise GazetteerError(f"unknown party {self.party_affiliation!r} for {self.surface_form!r}")
        if self.actor_type == "party" and self.party_affiliation == NO_PARTY:
            raise GazetteerError(f"party entry {self.surface_form!r} has no affiliation")


@dataclass(frozen=True)
class PageEntity:
    page_id: str
    name: str
    actor_type: str = UNRESOLVED
    party_affiliation: str = NO_PARTY
    matched_ngram: tp.Optional[str] = None

    def __post_init__(self):
        if self.actor_type == UNRESOLVED and self.party_affiliation != NO_PARTY:
            raise ValueError(f"unresolved page {self.page_id} cannot carry a party affiliation")

    @property
    def resolved(self) -> bool:
        return self.actor_type != UNRESOLVED


class Gazetteer:
    """Surface form index. Identical duplicates collapse, conflicting ones are rejected."""

    def __init__(self, entries: tp.Iterable[GazetteerEntry] = ()):
        self._index: tp.Dict[str, GazetteerEntry] = {}
        for entry in entries:
            known = self._index.get(entry.surface_form)
            if known is not None and known != entry:
                raise GazetteerError(f"conflicting entries for {entry.surface_form!r}: "
                                     f"{known.actor_type}/{known.party_affiliation} vs "
                                     f"{entry.actor_type}/{entry.party_affiliation}")
            self._index[entry.surface_form] = entry

    def get(self, surface_form: str) -> tp.Optional[GazetteerEntry]:
        return self._index.get(surface_form)

    def __len__(self):
        return len(self._index)

    def entries(self) -> tp.List[GazetteerEntry]:
        return [self._index[key] for key in sorted(self._index)]


AnyGazetteer = tp.Union[Gazetteer, tp.Iterable[GazetteerEntry]]


def as_gazetteer(g: AnyGazetteer) -> Gazetteer:
    return g if isinstance(g, Gazetteer) else Gazetteer(g)


def ngrams(words: tp.Sequence[str]) -> tp.Iterator[str]:
    """All contiguous n-grams, longest first, leftmost first within a length."""
    for size in range(len(words), 0, -1):
        for start in range(len(words) - size + 1):
            yield " ".join(words[start:start + size])


def resolve_page(name: str, gazetteer: AnyGazetteer, page_id: str = "") -> PageEntity:
    gazetteer = as_gazetteer(gazetteer)
    for gram in ngrams(normalize_name(name).split()):
        entry = gazetteer.get(gram)
        if entry is not None:
            return PageEntity(page_id, name, entry.actor_type, entry.party_affiliation, gram)
    return PageEntity(page_id, name)


def page_names(ads: tp.Iterable[AdRecord]) -> tp.Dict[str, str]:
    """Page id to the name reported by its most recent snapshot."""
    latest: tp.Dict[str, AdRecord] = {}
    for ad in ads:
        if not ad.page_name:
            continue
        known = latest.get(ad.page_id)
        if known is None or (ad.snapshot_time, ad.id) > (known.snapshot_time, known.id):
            latest[ad.page_id] = ad
    return {page_id: ad.page_name for page_id, ad in latest.items()}


def resolve_pages(ads: tp.Iterable[AdRecord], gazetteer: AnyGazetteer) -> tp.List[PageEntity]:
    ads = list(ads)
    gazetteer = as_gazetteer(gazetteer)
    names = page_names(ads)
    pages = []
    for page_id in sorted({ad.page_id for ad in ads}):
        pages.append(resolve_page(names.get(page_id, ""), gazetteer, page_id))
    unresolved = sum(1 for page in pages if not page.resolved)
    logger.info(f"Resolved {len(pages) - unresolved} of {len(pages)} pages")
    return pages


def affiliation_rollup(pages: tp.Iterable[PageEntity]) -> tp.Dict[str, int]:
    counts = Counter(page.party_affiliation for page in pages if page.party_affiliation in PARTIES)
    return {party: counts[party] for party in PARTIES if counts[party]}


def actor_type_rollup(pages: tp.Iterable[PageEntity], ads: tp.Iterable[AdRecord]) -> pd.DataFrame:
    """Ads and estimated impressions per actor type, largest audience first."""
    kinds = {page.page_id: page.actor_type for page in pages}
    counts: tp.Dict[str, int] = Counter()
    impressions: tp.Dict[str, tp.List[float]] = {}
    for ad in ads:
        kind = kinds.get(ad.page_id, UNRESOLVED)
        counts[kind] += 1
        impressions.setdefault(kind, []).append(estimated_impressions(ad))
    totals = {kind: stable_sum(values) for kind, values in impressions.items()}
    grand_total = stable_sum(totals.values())
    rows = []
    for kind in sorted(totals, key=lambda k: (-totals[k], k)):
        share = totals[kind] / grand_total if grand_total > 0 else 0.0
        rows.append({"actor_type": kind, "ads": counts[kind], "impressions": totals[kind],
                     "impression_share": share})
    return pd.DataFrame(rows, columns=["actor_type", "ads", "impressions", "impression_share"])


def load_gazetteer(path: tp.Optional[tp.Union[str, Path]] = None) -> Gazetteer:
    """Read a `surface_form|actor_type|party_affiliation` file with a header row."""
    path = Path(path or DATA_ROOT / 'gazetteer.psv')
    frame = pd.read_csv(path, sep="|", dtype=str, keep_default_na=False, comment="#")
    missing = [column for column in GAZETTEER_COLUMNS if column not in frame.columns]
    if missing:
        raise GazetteerError(f"gazetteer {path} lacks columns {missing}")
    entries = []
    for row in frame.itertuples(index=False):
        entries.append(GazetteerEntry(normalize_name(row.surface_form), row.actor_type.strip(),
                                      row.party_affiliation.strip() or NO_PARTY))
    gazetteer = Gazetteer(entries)
    logger.debug(f"Loaded {len(gazetteer)} gazetteer entries from {path}")
    return gazetteer
