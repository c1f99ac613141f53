"""Stance classification: featurization, model families, evaluation and persistence."""
from .evaluate import ClassificationMetrics, GridResult, cross_validate, grid_search  # noqa
from .models import (ModelSpec, TopFeatures, TrainedModel, load_model_grid,  # noqa
                     load_model_spec, spec_from_dict, top_features, train_classifier)
from .pipeline import (StanceLabel, StancePipeline, classify_stance, cross_validate_pipeline,  # noqa
                       evaluate_pipeline, train_pipeline)
from .states import load_pipeline, save_pipeline  # noqa
from .text import TfidfModel, TokenPipelineConfig, fit_tfidf, tokenize_stem, transform  # noqa
