"""Likert annotations, inter-annotator agreement and the two training sets.

Annotators rate the statement "our country has been made a worse place to live
by people coming to live here" on 1 (strongly disagree) to 5 (strongly agree),
or mark the ad irrelevant.
"""
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
import typing as tp

from loguru import logger
import numpy as np
import pandas as pd

from .errors import AnnotationError, UndefinedResultError

IRRELEVANT = "irrelevant"
LIKERT = (1, 2, 3, 4, 5)
LABELS = LIKERT + (IRRELEVANT,)
NEUTRAL = 3

KEEP = "keep"
DROP = "drop"

RELEVANT = "relevant"
PRO = "pro"
ANTI = "anti"
NEUTRAL_OR_IRRELEVANT = "neutral_or_irrelevant"

POLARITY = {1: PRO, 2: PRO, 4: ANTI, 5: ANTI}

METRICS = ("nominal", "ordinal", "interval")

Label = tp.Union[int, str]


def parse_label(raw) -> Label:
    text = str(raw).strip().lower()
    if text == IRRELEVANT:
        return IRRELEVANT
    if text.isdigit() and int(text) in LIKERT:
        return int(text)
    raise AnnotationError(f"unknown label {raw!r}, expected 1-5 or {IRRELEVANT}")


@dataclass(frozen=True)
class AnnotationRecord:
    ad_id: str
    annotator_id: str
    label: Label

    def __post_init__(self):
        if self.label not in LABELS:
            raise AnnotationError(f"unknown label {self.label!r} for ad {self.ad_id}")


def check_unique(annotations: tp.Iterable[AnnotationRecord]):
    seen = set()
    for record in annotations:
        key = (record.ad_id, record.annotator_id)
        if key in seen:
            raise AnnotationError(f"annotator {record.annotator_id} labeled ad {record.ad_id} twice")
        seen.add(key)


def labels_by_ad(annotations: tp.Iterable[AnnotationRecord]) -> tp.Dict[str, tp.List[Label]]:
    grouped: tp.Dict[str, tp.List[Label]] = defaultdict(list)
    for record in annotations:
        grouped[record.ad_id].append(record.label)
    return {ad_id: grouped[ad_id] for ad_id in sorted(grouped)}


def load_annotations(path: tp.Union[str, Path]) -> tp.List[AnnotationRecord]:
    """Read `ad_id|annotator_id|label` rows (header row required)."""
    frame = pd.read_csv(path, sep="|", dtype=str, keep_default_na=False)
    for column in ("ad_id", "annotator_id", "label"):
        if column not in frame.columns:
            raise AnnotationError(f"annotation file {path} lacks column {column}")
    records = [AnnotationRecord(row.ad_id, row.annotator_id, parse_label(row.label))
               for row in frame.itertuples(index=False)]
    check_unique(records)
    logger.debug(f"Read {len(records)} annotations from {path}")
    return records


def dump_annotations(annotations: tp.Iterable[AnnotationRecord]) -> str:
    lines = ["ad_id|annotator_id|label"]
    lines += [f"{r.ad_id}|{r.annotator_id}|{r.label}" for r in annotations]
    return "\n".join(lines) + "\n"


class ReliabilityMatrix:
    """Items by annotators, `None` where an annotator did not label an item."""

    def __init__(self, items: tp.Sequence[str], annotators: tp.Sequence[str],
                 values: tp.Sequence[tp.Sequence[tp.Optional[tp.Hashable]]]):
        if len(values) != len(items) or any(len(row) != len(annotators) for row in values):
            raise ValueError("reliability matrix shape does not match its labels")
        self.items = list(items)
        self.annotators = list(annotators)
        self.values = [list(row) for row in values]

    @classmethod
    def from_annotations(cls, annotations: tp.Iterable[AnnotationRecord],
                         transform: tp.Optional[tp.Callable[[Label], tp.Optional[tp.Hashable]]] = None):
        """Build the matrix; `transform` maps labels to categories, `None` meaning missing."""
        annotations = list(annotations)
        items = sorted({r.ad_id for r in annotations})
        annotators = sorted({r.annotator_id for r in annotations})
        row_of = {item: i for i, item in enumerate(items)}
        column_of = {annotator: j for j, annotator in enumerate(annotators)}
        values: tp.List[tp.List[tp.Optional[tp.Hashable]]] = [[None] * len(annotators) for _ in items]
        for r in annotations:
            value = r.label if transform is None else transform(r.label)
            values[row_of[r.ad_id]][column_of[r.annotator_id]] = value
        return cls(items, annotators, values)

    def pairable_rows(self) -> tp.List[tp.List[tp.Hashable]]:
        """Non-missing values of every item labeled at least twice."""
        rows = []
        for row in self.values:
            present = [v for v in row if v is not None]
            if len(present) >= 2:
                rows.append(present)
        return rows


@dataclass(frozen=True)
class AlphaResult:
    alpha: float
    metric: str
    items: int
    pairable_values: int
    degenerate: bool = False


def _distance_matrix(categories: tp.Sequence, marginals: np.ndarray, metric: str) -> np.ndarray:
    size = len(categories)
    if metric == "nominal":
        return 1.0 - np.eye(size)
    if metric == "interval":
        points = np.asarray(categories, dtype=float)
        return (points[:, None] - points[None, :]) ** 2
    # ordinal: squared mass between the two categories, half the end points counted
    cumulative = np.cumsum(marginals)
    delta = np.zeros((size, size))
    for c in range(size):
        for k in range(c, size):
            between = cumulative[k] - cumulative[c] + marginals[c]
            delta[c, k] = delta[k, c] = (between - (marginals[c] + marginals[k]) / 2) ** 2
    return delta


def coincidence_matrix(rows: tp.Sequence[tp.Sequence[tp.Hashable]],
                       categories: tp.Sequence[tp.Hashable]) -> np.ndarray:
    index = {category: i for i, category in enumerate(categories)}
    counts = np.zeros((len(rows), len(categories)))
    for u, row in enumerate(rows):
        for value in row:
            counts[u, index[value]] += 1
    weights = 1.0 / (counts.sum(axis=1) - 1.0)
    weighted = counts * weights[:, None]
    return weighted.T @ counts - np.diag(weighted.sum(axis=0))


def krippendorff_alpha(matrix: ReliabilityMatrix, metric: str = "ordinal",
                       categories: tp.Optional[tp.Sequence[tp.Hashable]] = None) -> AlphaResult:
    """Krippendorff's alpha with missing data.

    Categories default to the sorted set of observed values; pass them
    explicitly to fix the order used by the ordinal metric.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    rows = matrix.pairable_rows()
    if len(rows) < 2:
        raise UndefinedResultError(f"alpha needs at least 2 items with 2 labels, got {len(rows)}")
    if categories is None:
        categories = sorted({value for row in rows for value in row})
    coincidences = coincidence_matrix(rows, categories)
    marginals = coincidences.sum(axis=0)
    total = marginals.sum()
    delta = _distance_matrix(categories, marginals, metric)
    observed = float((coincidences * delta).sum())
    expected = float((np.outer(marginals, marginals) * delta).sum())
    if expected == 0:
        return AlphaResult(1.0, metric, len(rows), int(total), degenerate=True)
    alpha = 1.0 - (total - 1.0) * observed / expected
    return AlphaResult(float(alpha), metric, len(rows), int(total))


def relevance_consensus(labels: tp.Sequence[Label]) -> str:
    if not labels:
        raise AnnotationError("relevance consensus needs at least one label")
    return DROP if sum(1 for label in labels if label == IRRELEVANT) >= 2 else KEEP


def resolve_label(labels: tp.Sequence[Label], tie_break: str = "lower") -> Label:
    """Majority label; ties go to the label closest to 3, then to `tie_break`.

    Numeric labels win ties against `irrelevant`.
    """
    if tie_break not in ("lower", "higher"):
        raise ValueError(f"tie_break must be 'lower' or 'higher', got {tie_break!r}")
    if not labels:
        raise AnnotationError("cannot resolve an empty label list")
    counts = Counter(labels)
    top = max(counts.values())
    candidates = [label for label, count in counts.items() if count == top]
    if len(candidates) == 1:
        return candidates[0]
    numeric = [label for label in candidates if label != IRRELEVANT]
    if not numeric:
        return IRRELEVANT
    sign = 1 if tie_break == "lower" else -1
    return min(numeric, key=lambda label: (abs(label - NEUTRAL), sign * label))


def stance_class(labels: tp.Sequence[Label], tie_break: str = "lower") -> str:
    """Three-class target of one ad: pro, anti or neutral_or_irrelevant."""
    if relevance_consensus(labels) == DROP:
        return NEUTRAL_OR_IRRELEVANT
    return POLARITY.get(resolve_label(labels, tie_break), NEUTRAL_OR_IRRELEVANT)


def stance_classes(annotations: tp.Iterable[AnnotationRecord],
                   tie_break: str = "lower") -> tp.Dict[str, str]:
    return {ad_id: stance_class(labels, tie_break)
            for ad_id, labels in labels_by_ad(annotations).items()}


@dataclass(frozen=True)
class TrainingSets:
    relevance_set: tp.Tuple[tp.Tuple[str, str], ...]
    leaning_set: tp.Tuple[tp.Tuple[str, str], ...]


def build_training_sets(annotations: tp.Iterable[AnnotationRecord],
                        texts: tp.Mapping[str, str],
                        extra_irrelevant: tp.Sequence[str] = (),
                        tie_break: str = "lower") -> TrainingSets:
    relevance = []
    leaning = []
    for ad_id, target in stance_classes(annotations, tie_break).items():
        if ad_id not in texts:
            raise AnnotationError(f"annotated ad {ad_id} has no text in the dataset")
        text = texts[ad_id]
        if target == NEUTRAL_OR_IRRELEVANT:
            relevance.append((text, IRRELEVANT))
        else:
            relevance.append((text, RELEVANT))
            leaning.append((text, target))
    relevance.extend((text, IRRELEVANT) for text in extra_irrelevant)
    logger.info(f"Training sets: {len(relevance)} relevance items "
                f"({len(extra_irrelevant)} extra irrelevant), {len(leaning)} leaning items")
    return TrainingSets(tuple(relevance), tuple(leaning))


@dataclass(frozen=True)
class AgreementReport:
    ordinal: AlphaResult
    binary: AlphaResult
    dropped_ads: int

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for name, result in (("likert_ordinal", self.ordinal), ("polarity_nominal", self.binary)):
            rows.append({"measure": name, "alpha": result.alpha, "metric": result.metric,
                         "items": result.items, "pairable_values": result.pairable_values,
                         "degenerate": result.degenerate})
        return pd.DataFrame(rows)


def agreement_report(annotations: tp.Iterable[AnnotationRecord]) -> AgreementReport:
    """Ordinal alpha over the five Likert labels once consensus drops are removed,
    and nominal alpha on the pro/anti grouping."""
    annotations = list(annotations)
    grouped = labels_by_ad(annotations)
    dropped = {ad_id for ad_id, labels in grouped.items() if relevance_consensus(labels) == DROP}
    kept = [r for r in annotations if r.ad_id not in dropped]

    likert = ReliabilityMatrix.from_annotations(
        kept, lambda label: None if label == IRRELEVANT else label)
    polarity = ReliabilityMatrix.from_annotations(kept, POLARITY.get)
    return AgreementReport(
        ordinal=krippendorff_alpha(likert, "ordinal", categories=LIKERT),
        binary=krippendorff_alpha(polarity, "nominal", categories=(PRO, ANTI)),
        dropped_ads=len(dropped))


def label_confusion(annotations: tp.Iterable[AnnotationRecord]) -> pd.DataFrame:
    """Counts of ordered label pairs given to the same ad by distinct annotators."""
    names = [str(label) for label in LABELS]
    table = pd.DataFrame(0, index=names, columns=names)
    for labels in labels_by_ad(annotations).values():
        for i, first in enumerate(labels):
            for j, second in enumerate(labels):
                if i != j:
                    table.loc[str(first), str(second)] += 1
    return table
