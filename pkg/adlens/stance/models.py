"""Model specs and the four classifier families.

Specs ship as JSON files under `data/modelspecs/`, one per family, each holding
the default hyperparameters and the default search grid. Missing keys fall back
to `default_hyperparameters` and `default_grids` below.
"""
from dataclasses import dataclass, field
import itertools
import json
from pathlib import Path
import typing as tp

from loguru import logger
import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import SGDClassifier
from sklearn.naive_bayes import MultinomialNB
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import FeatureError, ValidationError
from ..ingest import DATA_ROOT

SPEC_ROOT = DATA_ROOT / 'modelspecs'

MNB = "multinomial_naive_bayes"
LR = "logistic_regression"
RF = "random_forest"
SVM = "linear_svm"
FAMILIES = (MNB, LR, RF, SVM)
LINEAR_FAMILIES = (LR, SVM)

default_hyperparameters = {}
default_hyperparameters[MNB] = {'alpha': 0.4}
default_hyperparameters[RF] = {'n_trees': 100, 'min_samples_split': 3}
default_hyperparameters[LR] = {'l2': 1.0}
default_hyperparameters[SVM] = {'C': 1.0}

default_grids = {}
default_grids[MNB] = {'alpha': [round(0.1 * i, 1) for i in range(1, 11)]}
default_grids[RF] = {'n_trees': [50, 100, 200], 'min_samples_split': [2, 3, 5]}
default_grids[LR] = {'l2': [0.01, 0.1, 1.0, 10.0]}
default_grids[SVM] = {'C': [0.01, 0.1, 1.0, 10.0]}

INTEGER_PARAMETERS = ('n_trees', 'min_samples_split')


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: tp.Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown model family {self.family!r}, expected one of {FAMILIES}")
        expected = set(default_hyperparameters[self.family])
        given = set(self.hyperparameters)
        if given != expected:
            raise ValidationError(f"{self.family} needs hyperparameters {sorted(expected)}, "
                                  f"got {sorted(given)}")
        params = {}
        for name in sorted(self.hyperparameters):
            value = self.hyperparameters[name]
            if name in INTEGER_PARAMETERS:
                if float(value) != int(value):
                    raise ValidationError(f"{name} must be an integer, got {value!r}")
                value = int(value)
            else:
                value = float(value)
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value!r}")
            params[name] = value
        if self.family == RF and params['min_samples_split'] < 2:
            raise ValidationError("min_samples_split must be >= 2")
        object.__setattr__(self, "hyperparameters", params)

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.hyperparameters.items()))))

    def __getitem__(self, name: str):
        return self.hyperparameters[name]

    def describe(self) -> str:
        params = ",".join(f"{k}={v}" for k, v in self.hyperparameters.items())
        return f"{self.family}({params})"


def _read_spec_file(family: str, path: tp.Optional[Path] = None) -> dict:
    if family not in FAMILIES:
        raise ValidationError(f"unknown model family {family!r}, expected one of {FAMILIES}")
    path = Path(path or SPEC_ROOT / f'{family}.json')
    if not path.is_file():
        return {}
    with open(path, 'r') as f:
        raw = json.loads(f.read())
    if raw.get("family", family) != family:
        raise ValidationError(f"{path} describes {raw['family']}, not {family}")
    return raw


def load_model_spec(family: str, path: tp.Optional[Path] = None) -> ModelSpec:
    """Default spec of a family, bundled JSON first, built-in defaults for missing keys."""
    params = dict(default_hyperparameters[family]) if family in FAMILIES else {}
    params.update(_read_spec_file(family, path).get("default", {}))
    return ModelSpec(family, params)


def load_model_grid(family: str, path: tp.Optional[Path] = None) -> tp.Dict[str, tp.List[float]]:
    grid = dict(default_grids[family]) if family in FAMILIES else {}
    grid.update(_read_spec_file(family, path).get("grid", {}))
    return grid


def spec_from_dict(raw: tp.Mapping) -> ModelSpec:
    """`{family: random_forest, n_trees: 50}` -> ModelSpec with the other values defaulted."""
    raw = dict(raw)
    family = raw.pop("family", None)
    if family is None:
        raise ValidationError("model spec needs a family")
    base = load_model_spec(family)
    unknown = set(raw) - set(base.hyperparameters)
    if unknown:
        raise ValidationError(f"unknown hyperparameters for {family}: {sorted(unknown)}")
    return ModelSpec(family, {**base.hyperparameters, **raw})


def expand_grid(family: str, grid: tp.Mapping[str, tp.Sequence]) -> tp.List[ModelSpec]:
    base = load_model_spec(family)
    names = sorted(grid)
    specs = []
    for values in itertools.product(*(grid[name] for name in names)):
        specs.append(ModelSpec(family, {**base.hyperparameters, **dict(zip(names, values))}))
    return specs


def model_size_key(spec: ModelSpec) -> tuple:
    """Sort key, smaller models first: fewer trees, stronger regularization, more smoothing."""
    p = spec.hyperparameters
    if spec.family == RF:
        return (p['n_trees'], -p['min_samples_split'])
    if spec.family == MNB:
        return (-p['alpha'],)
    if spec.family == LR:
        return (-p['l2'],)
    return (p['C'],)


def log_loss_objective(theta: np.ndarray, X, t: np.ndarray, l2: float) -> tp.Tuple[float, np.ndarray]:
    """Summed log-loss plus (l2 / 2) ||w||^2 and its gradient; the last entry of theta is the
    unregularized intercept."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = np.sum(np.logaddexp(0.0, z) - t * z) + 0.5 * l2 * w @ w
    residual = expit(z) - t
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ residual + l2 * w
    grad[-1] = residual.sum()
    return float(loss), grad


class L2LogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fitted by L-BFGS on the regularized log-loss."""

    def __init__(self, l2: float = 1.0, tol: float = 1e-6, max_iter: int = 1000):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        self.classes_, target = np.unique(np.asarray(y), return_inverse=True)
        if len(self.classes_) != 2:
            raise FeatureError(f"logistic regression needs 2 classes, got {len(self.classes_)}")
        theta = np.zeros(X.shape[1] + 1)
        result = minimize(log_loss_objective, theta, args=(X, target.astype(np.float64), self.l2),
                          jac=True, method="L-BFGS-B",
                          options={"gtol": self.tol, "maxiter": self.max_iter})
        if not result.success:
            logger.warning(f"Logistic regression stopped early: {result.message}")
        self.coef_ = result.x[None, :-1]
        self.intercept_ = result.x[-1:]
        self.n_iter_ = result.nit
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        return np.asarray(X @ self.coef_[0]).ravel() + self.intercept_[0]

    def predict_proba(self, X) -> np.ndarray:
        positive = expit(self.decision_function(X))
        return np.column_stack([1.0 - positive, positive])

    def predict(self, X) -> np.ndarray:
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


def build_estimator(spec: ModelSpec, seed: int, n_samples: int, workers: int = 0):
    p = spec.hyperparameters
    if spec.family == MNB:
        return MultinomialNB(alpha=p['alpha'])
    if spec.family == RF:
        return RandomForestClassifier(
            n_estimators=p['n_trees'], min_samples_split=p['min_samples_split'],
            criterion="gini", max_features="sqrt", bootstrap=True,
            random_state=seed, n_jobs=workers or None)
    if spec.family == LR:
        return L2LogisticRegression(l2=p['l2'])
    # hinge loss with ||w||^2 / 2 + C * sum(hinge) scaled to SGD's per-sample alpha
    return SGDClassifier(loss="hinge", penalty="l2", alpha=1.0 / (p['C'] * n_samples),
                         max_iter=1000, tol=1e-6, random_state=seed)


@dataclass
class TrainedModel:
    spec: ModelSpec
    estimator: tp.Any

    @property
    def classes(self) -> tp.List[str]:
        return list(self.estimator.classes_)

    def predict(self, X) -> np.ndarray:
        return self.estimator.predict(X)


def train_classifier(X, y: tp.Sequence[str], spec: ModelSpec, seed: int, workers: int = 0) -> TrainedModel:
    y = np.asarray(y)
    if X.shape[0] == 0 or len(y) == 0:
        raise FeatureError("cannot train on an empty training set")
    if X.shape[0] != len(y):
        raise ValidationError(f"{X.shape[0]} feature rows for {len(y)} labels")
    if len(np.unique(y)) < 2:
        raise FeatureError(f"training labels hold a single class ({y[0]})")
    estimator = build_estimator(spec, seed, X.shape[0], workers)
    estimator.fit(X, y)
    return TrainedModel(spec, estimator)


@dataclass(frozen=True)
class TopFeatures:
    negative: tp.List[tp.Tuple[str, float]]
    positive: tp.List[tp.Tuple[str, float]]
    negative_class: str
    positive_class: str


def top_features(model: TrainedModel, feature_names: tp.Sequence[str], n: int = 10) -> TopFeatures:
    """The `n` most negative and most positive weights; positive weights favour `classes[1]`."""
    if model.spec.family not in LINEAR_FAMILIES:
        raise FeatureError(f"{model.spec.family} has no linear weight vector")
    weights = np.asarray(model.estimator.coef_).ravel()
    if len(weights) != len(feature_names):
        raise FeatureError(f"{len(weights)} weights for {len(feature_names)} feature names")
    pairs = [(name, float(w)) for name, w in zip(feature_names, weights)]
    negative = sorted(pairs, key=lambda p: (p[1], p[0]))[:n]
    positive = sorted(pairs, key=lambda p: (-p[1], p[0]))[:n]
    return TopFeatures(negative, positive, str(model.classes[0]), str(model.classes[1]))
