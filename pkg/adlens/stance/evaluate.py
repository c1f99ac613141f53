"""Cross-validation and grid search.

Folds are stratified and shuffled with the master seed; every fold trains with
`derive_seed(seed, fold)` so results do not depend on how folds are scheduled.
TF-IDF is refitted inside each fold.
"""
from dataclasses import dataclass
import typing as tp

from loguru import logger
import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support
from sklearn.model_selection import KFold, StratifiedKFold
import tqdm

from ..errors import ValidationError
from ..utils import derive_seed, get_pool, ordered_map
from .models import ModelSpec, expand_grid, load_model_grid, model_size_key, train_classifier
from .text import TokenPipelineConfig, fit_tfidf, transform


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True, eq=False)
class ClassificationMetrics:
    classes: tp.Tuple[str, ...]
    per_class: tp.Dict[str, ClassMetrics]
    macro_f1: float
    confusion: np.ndarray
    predictions: tp.Tuple[str, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        rows = [{"class": name, "precision": m.precision, "recall": m.recall, "f1": m.f1,
                 "support": m.support} for name, m in self.per_class.items()]
        rows.append({"class": "macro", "precision": float(np.mean([m.precision for m in self.per_class.values()])),
                     "recall": float(np.mean([m.recall for m in self.per_class.values()])),
                     "f1": self.macro_f1, "support": int(sum(m.support for m in self.per_class.values()))})
        return pd.DataFrame(rows, columns=["class", "precision", "recall", "f1", "support"])

    def confusion_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.confusion, index=list(self.classes), columns=list(self.classes))
        frame.index.name = "true"
        return frame.reset_index()


def metrics_from_predictions(y_true: tp.Sequence[str], y_pred: tp.Sequence[str],
                             classes: tp.Optional[tp.Sequence[str]] = None) -> ClassificationMetrics:
    classes = list(classes) if classes is not None else sorted(set(y_true) | set(y_pred))
    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=classes, zero_division=0)
    per_class = {name: ClassMetrics(float(p), float(r), float(f), int(s))
                 for name, p, r, f, s in zip(classes, precision, recall, f1, support)}
    return ClassificationMetrics(
        classes=tuple(classes), per_class=per_class, macro_f1=float(np.mean(f1)),
        confusion=confusion_matrix(y_true, y_pred, labels=classes),
        predictions=tuple(str(p) for p in y_pred))


def make_folds(y: tp.Sequence[str], k: int, seed: int) -> tp.List[tp.Tuple[np.ndarray, np.ndarray]]:
    y = np.asarray(y)
    if k < 2:
        raise ValidationError(f"cross-validation needs k >= 2, got {k}")
    if k > len(y):
        raise ValidationError(f"cannot split {len(y)} items into {k} folds")
    _, counts = np.unique(y, return_counts=True)
    if counts.min() < k:
        logger.warning(f"A class has {counts.min()} members, fewer than {k} folds; "
                       "falling back to non-stratified folds")
        splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    else:
        splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return list(splitter.split(np.zeros(len(y)), y))


def cross_validate(texts: tp.Sequence[str], labels: tp.Sequence[str], spec: ModelSpec,
                   k: int = 10, seed: int = 0, text_config: tp.Optional[TokenPipelineConfig] = None,
                   workers: int = 0) -> ClassificationMetrics:
    """Metrics pooled over the held-out predictions of `k` folds."""
    texts = list(texts)
    labels = np.asarray(labels)
    folds = make_folds(labels, k, seed)

    def run_fold(index):
        train, test = folds[index]
        features = fit_tfidf([texts[i] for i in train], text_config)
        model = train_classifier(transform([texts[i] for i in train], features), labels[train],
                                 spec, derive_seed(seed, index))
        return test, model.predict(transform([texts[i] for i in test], features))

    predictions = np.empty(len(labels), dtype=object)
    for test, predicted in ordered_map(run_fold, range(len(folds)), workers):
        predictions[test] = predicted
    return metrics_from_predictions(list(labels), list(predictions), sorted(set(labels)))


@dataclass(frozen=True)
class GridResult:
    best: ModelSpec
    metrics: ClassificationMetrics
    scores: tp.Tuple[tp.Tuple[ModelSpec, float], ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{"spec": spec.describe(), "macro_f1": score, "best": spec == self.best}
                             for spec, score in self.scores])


def select_best(scores: tp.Sequence[tp.Tuple[ModelSpec, float]]) -> ModelSpec:
    """Highest macro F1; exact ties go to the smaller model."""
    return min(scores, key=lambda item: (-item[1], model_size_key(item[0])))[0]


def grid_search(texts: tp.Sequence[str], labels: tp.Sequence[str], family: str,
                grid: tp.Optional[tp.Mapping[str, tp.Sequence]] = None, k: int = 10, seed: int = 0,
                text_config: tp.Optional[TokenPipelineConfig] = None, workers: int = 0,
                progress: bool = False) -> GridResult:
    specs = expand_grid(family, grid if grid is not None else load_model_grid(family))
    if not specs:
        raise ValidationError(f"empty grid for {family}")

    # every grid point sees the same folds
    def evaluate(spec):
        return cross_validate(texts, labels, spec, k, seed, text_config)

    with get_pool(workers) as pool:
        futures = [pool.submit(evaluate, spec) for spec in specs]
        results = [future.result() for future in
                   tqdm.tqdm(futures, desc=f"grid {family}", leave=False, disable=not progress)]
    scores = tuple((spec, result.macro_f1) for spec, result in zip(specs, results))
    best = select_best(scores)
    logger.info(f"Grid search over {len(specs)} {family} specs picked {best.describe()}")
    return GridResult(best, results[specs.index(best)], scores)
