"""Two-stage stance classifier: relevance first, then pro/anti leaning."""
from dataclasses import dataclass
import enum
import typing as tp

from loguru import logger
import numpy as np

from ..annotation import ANTI, IRRELEVANT, NEUTRAL_OR_IRRELEVANT, PRO, RELEVANT, TrainingSets
from ..utils import derive_seed, ordered_map
from .evaluate import ClassificationMetrics, make_folds, metrics_from_predictions
from .models import ModelSpec, TrainedModel, train_classifier
from .text import TfidfModel, TokenPipelineConfig, fit_tfidf, transform


class StanceLabel(str, enum.Enum):
    PRO = PRO
    ANTI = ANTI
    NEUTRAL_OR_IRRELEVANT = NEUTRAL_OR_IRRELEVANT


STANCE_ORDER = (StanceLabel.ANTI.value, StanceLabel.PRO.value, StanceLabel.NEUTRAL_OR_IRRELEVANT.value)


@dataclass
class StancePipeline:
    relevance_features: TfidfModel
    relevance_model: TrainedModel
    leaning_features: TfidfModel
    leaning_model: TrainedModel
    # class returned for texts without a single known token
    relevance_prior: str = IRRELEVANT

    def is_relevant(self, texts: tp.Sequence[str]) -> np.ndarray:
        X = transform(texts, self.relevance_features)
        predicted = np.asarray(self.relevance_model.predict(X)) == RELEVANT
        empty = np.asarray(X.getnnz(axis=1) == 0)
        predicted[empty] = self.relevance_prior == RELEVANT
        return predicted

    def classify(self, texts: tp.Sequence[str]) -> tp.List[StanceLabel]:
        texts = list(texts)
        labels = [StanceLabel.NEUTRAL_OR_IRRELEVANT] * len(texts)
        relevant = np.flatnonzero(self.is_relevant(texts))
        if len(relevant):
            leaning = self.leaning_model.predict(
                transform([texts[i] for i in relevant], self.leaning_features))
            for i, value in zip(relevant, leaning):
                labels[i] = StanceLabel(value)
        return labels


def classify_stance(text: str, pipeline: StancePipeline) -> StanceLabel:
    return pipeline.classify([text])[0]


def majority_class(labels: tp.Sequence[str]) -> str:
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    top = counts.max()
    winners = [str(v) for v, c in zip(values, counts) if c == top]
    return IRRELEVANT if IRRELEVANT in winners else winners[0]


def train_pipeline(sets: TrainingSets, relevance_spec: ModelSpec, leaning_spec: ModelSpec,
                   seed: int, text_config: tp.Optional[TokenPipelineConfig] = None,
                   workers: int = 0) -> StancePipeline:
    """Each stage gets its own vocabulary and seed."""
    relevance_texts = [text for text, _ in sets.relevance_set]
    relevance_labels = [label for _, label in sets.relevance_set]
    leaning_texts = [text for text, _ in sets.leaning_set]
    leaning_labels = [label for _, label in sets.leaning_set]

    relevance_features = fit_tfidf(relevance_texts, text_config)
    relevance_model = train_classifier(transform(relevance_texts, relevance_features),
                                       relevance_labels, relevance_spec, derive_seed(seed, 0), workers)
    leaning_features = fit_tfidf(leaning_texts, text_config)
    leaning_model = train_classifier(transform(leaning_texts, leaning_features),
                                     leaning_labels, leaning_spec, derive_seed(seed, 1), workers)
    logger.debug(f"Trained {relevance_spec.describe()} for relevance, "
                 f"{leaning_spec.describe()} for leaning")
    return StancePipeline(relevance_features, relevance_model, leaning_features, leaning_model,
                          majority_class(relevance_labels))


def training_sets_from_targets(texts: tp.Sequence[str], targets: tp.Sequence[str]) -> TrainingSets:
    relevance = []
    leaning = []
    for text, target in zip(texts, targets):
        if target == NEUTRAL_OR_IRRELEVANT:
            relevance.append((text, IRRELEVANT))
        else:
            relevance.append((text, RELEVANT))
            leaning.append((text, target))
    return TrainingSets(tuple(relevance), tuple(leaning))


def cross_validate_pipeline(texts: tp.Sequence[str], targets: tp.Sequence[str],
                            relevance_spec: ModelSpec, leaning_spec: ModelSpec, k: int = 10,
                            seed: int = 0, text_config: tp.Optional[TokenPipelineConfig] = None,
                            workers: int = 0) -> ClassificationMetrics:
    """Three-class metrics and confusion matrix of the whole pipeline over `k` folds."""
    texts = list(texts)
    targets = np.asarray(targets)
    folds = make_folds(targets, k, seed)

    def run_fold(index):
        train, test = folds[index]
        sets = training_sets_from_targets([texts[i] for i in train], targets[train])
        pipeline = train_pipeline(sets, relevance_spec, leaning_spec, derive_seed(seed, index),
                                  text_config)
        return test, [label.value for label in pipeline.classify([texts[i] for i in test])]

    predictions = np.empty(len(targets), dtype=object)
    for test, predicted in ordered_map(run_fold, range(len(folds)), workers):
        predictions[test] = predicted
    return metrics_from_predictions(list(targets), list(predictions), STANCE_ORDER)


@dataclass(frozen=True)
class PipelineEvaluation:
    relevance: ClassificationMetrics
    leaning: tp.Optional[ClassificationMetrics]
    stance: ClassificationMetrics


def evaluate_pipeline(pipeline: StancePipeline, texts: tp.Sequence[str],
                      targets: tp.Sequence[str]) -> PipelineEvaluation:
    """Scores on held-out annotations; leaning is scored on the truly polar items only."""
    texts = list(texts)
    targets = list(targets)
    predicted = [label.value for label in pipeline.classify(texts)]
    relevant_pred = [RELEVANT if flag else IRRELEVANT for flag in pipeline.is_relevant(texts)]
    relevant_true = [IRRELEVANT if t == NEUTRAL_OR_IRRELEVANT else RELEVANT for t in targets]
    polar = [i for i, t in enumerate(targets) if t != NEUTRAL_OR_IRRELEVANT]
    leaning = None
    if polar:
        leaning_pred = pipeline.leaning_model.predict(
            transform([texts[i] for i in polar], pipeline.leaning_features))
        leaning = metrics_from_predictions([targets[i] for i in polar], list(leaning_pred), (ANTI, PRO))
    return PipelineEvaluation(
        relevance=metrics_from_predictions(relevant_true, relevant_pred, (IRRELEVANT, RELEVANT)),
        leaning=leaning,
        stance=metrics_from_predictions(targets, predicted, STANCE_ORDER))
