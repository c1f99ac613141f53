"""Daily news-attention and ad-impression series and bidirectional Granger tests.

For a lag d the restricted model regresses the effect on an intercept and its
own d lags, the unrestricted model adds d lags of the cause; both are fitted on
the N - d usable days and compared with the sum-of-squares F test.
"""
from dataclasses import dataclass
from datetime import date, timedelta
import typing as tp

from loguru import logger
import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import betainc

from .errors import DegenerateSeriesError, RankDeficiencyError, ValidationError
from .ingest import AdRecord, NewsArticle, ThemeCatalog, estimated_impressions, migration_theme_count
from .store import COLLECTION_DATE
from .utils import ordered_map, stable_sum

DEFAULT_MAX_LAG = 10
DEFAULT_ALPHA = 0.01


def daily_grid(start: date, end: date) -> tp.List[date]:
    if end < start:
        raise ValidationError(f"grid ends ({end}) before it starts ({start})")
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


class TimeSeries:
    """Values on a contiguous daily grid starting at `start`."""

    def __init__(self, start: date, values: tp.Sequence[float], name: str = ""):
        self.start = start
        self.values = np.asarray(values, dtype=float)
        self.name = name

    @classmethod
    def from_pairs(cls, pairs: tp.Sequence[tp.Tuple[date, float]], name: str = "") -> "TimeSeries":
        if not pairs:
            raise ValidationError("a time series needs at least one day")
        for (previous, _), (current, _) in zip(pairs, pairs[1:]):
            if current - previous != timedelta(days=1):
                raise ValidationError(f"series dates must step by one day, got {previous} then {current}")
        return cls(pairs[0][0], [value for _, value in pairs], name)

    def __len__(self):
        return len(self.values)

    @property
    def end(self) -> date:
        return self.start + timedelta(days=len(self.values) - 1)

    @property
    def dates(self) -> tp.List[date]:
        return [self.start + timedelta(days=i) for i in range(len(self.values))]

    def items(self) -> tp.List[tp.Tuple[date, float]]:
        return list(zip(self.dates, self.values.tolist()))

    def renamed(self, name: str) -> "TimeSeries":
        return TimeSeries(self.start, self.values, name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": [d.isoformat() for d in self.dates], "value": self.values})


def _grid_bounds(days: tp.Sequence[date], start: tp.Optional[date], end: tp.Optional[date]):
    if start is None or end is None:
        if not days:
            raise ValidationError("cannot infer the date range of an empty series")
        start = start or min(days)
        end = end or max(days)
    return start, end


def news_series(articles: tp.Iterable[NewsArticle], catalog: ThemeCatalog,
                start: tp.Optional[date] = None, end: tp.Optional[date] = None) -> TimeSeries:
    """Per day, the sum over articles of migration themes / all themes."""
    articles = list(articles)
    start, end = _grid_bounds([a.date for a in articles], start, end)
    parts: tp.List[tp.List[float]] = [[] for _ in daily_grid(start, end)]
    for article in articles:
        if not start <= article.date <= end:
            continue
        migration, total = migration_theme_count(article, catalog)
        if total:
            parts[(article.date - start).days].append(migration / total)
    return TimeSeries(start, [stable_sum(p) for p in parts], "news")


def delivery_days(ad: AdRecord, collection_date: date = COLLECTION_DATE) -> tp.Tuple[date, date]:
    stop = ad.delivery_stop or collection_date
    return ad.delivery_start, max(stop, ad.delivery_start)


def impressions_series(ads: tp.Iterable[AdRecord], stance: tp.Optional[str] = None,
                       stances: tp.Optional[tp.Mapping[str, str]] = None,
                       start: tp.Optional[date] = None, end: tp.Optional[date] = None,
                       collection_date: date = COLLECTION_DATE, name: str = "impressions") -> TimeSeries:
    """Spread each ad's estimated impressions uniformly over its delivery days.

    With `stance` set, only ads whose entry in `stances` equals it contribute.
    """
    if stance is not None and stances is None:
        raise ValidationError("a stance filter needs the stance of every ad")
    ads = [ad for ad in ads if stance is None or stances.get(ad.id) == stance]
    windows = [delivery_days(ad, collection_date) for ad in ads]
    start, end = _grid_bounds([w[0] for w in windows] + [w[1] for w in windows], start, end)
    parts: tp.List[tp.List[float]] = [[] for _ in daily_grid(start, end)]
    for ad, (first, last) in zip(ads, windows):
        days = (last - first).days + 1
        per_day = estimated_impressions(ad) / days
        for offset in range(days):
            day = first + timedelta(days=offset)
            if start <= day <= end:
                parts[(day - start).days].append(per_day)
    return TimeSeries(start, [stable_sum(p) for p in parts], name)


def difference(series: TimeSeries) -> TimeSeries:
    if len(series) < 2:
        raise ValidationError("differencing needs at least two days")
    return TimeSeries(series.start + timedelta(days=1), np.diff(series.values), series.name)


@dataclass(frozen=True, eq=False)
class OLSResult:
    coefficients: np.ndarray
    rss: float


def ols_fit(X: np.ndarray, y: np.ndarray) -> OLSResult:
    """Least squares through a column-pivoted QR decomposition."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValidationError(f"least squares needs more rows ({n}) than columns ({p})")
    Q, R, pivots = linalg.qr(X, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(R))
    tolerance = diagonal.max() * max(n, p) * np.finfo(float).eps if diagonal.size else 0.0
    rank = int(np.sum(diagonal > tolerance))
    if rank < p:
        raise RankDeficiencyError(sorted(int(c) for c in pivots[rank:]))
    beta = np.empty(p)
    beta[pivots] = linalg.solve_triangular(R, Q.T @ y)
    residual = y - X @ beta
    return OLSResult(beta, float(residual @ residual))


def f_sf(f_stat: float, d1: int, d2: int) -> float:
    """Survival function of the F(d1, d2) distribution via the regularized incomplete beta."""
    if f_stat <= 0:
        return 1.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f_stat)))


def lagged(values: np.ndarray, lag: int) -> np.ndarray:
    """Columns values[t-1], ..., values[t-lag] for t = lag .. N-1."""
    n = len(values)
    return np.column_stack([values[lag - j:n - j] for j in range(1, lag + 1)])


@dataclass(frozen=True)
class LagTest:
    lag: int
    f_stat: float
    p_value: float
    rss_restricted: float
    rss_unrestricted: float
    observations: int
    df_num: int
    df_den: int
    significant: bool


@dataclass(frozen=True)
class GrangerResult:
    cause: str
    effect: str
    lags: tp.Tuple[LagTest, ...]
    alpha: float = DEFAULT_ALPHA

    @property
    def significant_lags(self) -> tp.List[int]:
        return [test.lag for test in self.lags if test.significant]

    def to_frame(self) -> pd.DataFrame:
        rows = [{"cause": self.cause, "effect": self.effect, **test.__dict__} for test in self.lags]
        return pd.DataFrame(rows)


def lag_test(cause: np.ndarray, effect: np.ndarray, lag: int, alpha: float = DEFAULT_ALPHA) -> LagTest:
    target = effect[lag:]
    intercept = np.ones((len(target), 1))
    own = lagged(effect, lag)
    restricted = ols_fit(np.hstack([intercept, own]), target)
    unrestricted = ols_fit(np.hstack([intercept, own, lagged(cause, lag)]), target)
    observations = len(target)
    df_den = observations - 2 * lag - 1
    if unrestricted.rss == 0:
        raise DegenerateSeriesError(f"unrestricted model fits exactly at lag {lag}")
    f_stat = max(restricted.rss - unrestricted.rss, 0.0) / lag / (unrestricted.rss / df_den)
    p_value = f_sf(f_stat, lag, df_den)
    return LagTest(lag, f_stat, p_value, restricted.rss, unrestricted.rss, observations,
                   lag, df_den, p_value < alpha)


def granger_test(cause: TimeSeries, effect: TimeSeries, max_lag: int = DEFAULT_MAX_LAG,
                 alpha: float = DEFAULT_ALPHA, difference_first: bool = False,
                 workers: int = 0) -> GrangerResult:
    """Does the history of `cause` improve the prediction of `effect`, per lag 1..max_lag."""
    if cause.start != effect.start or len(cause) != len(effect):
        raise ValidationError(f"series {cause.name} and {effect.name} are not on the same date grid")
    if max_lag < 1:
        raise ValidationError(f"max_lag must be >= 1, got {max_lag}")
    if difference_first:
        cause, effect = difference(cause), difference(effect)
    if len(cause) <= 3 * max_lag + 1:
        raise ValidationError(f"series of {len(cause)} days is too short for max_lag {max_lag}")
    for series in (cause, effect):
        if np.ptp(series.values) == 0:
            raise DegenerateSeriesError(f"series {series.name or '?'} is constant")
    lags = ordered_map(lambda lag: lag_test(cause.values, effect.values, lag, alpha),
                       range(1, max_lag + 1), workers)
    result = GrangerResult(cause.name, effect.name, tuple(lags), alpha)
    logger.debug(f"Granger {cause.name} -> {effect.name}: significant lags {result.significant_lags}")
    return result


def granger_both_directions(news: TimeSeries, impressions: TimeSeries, max_lag: int = DEFAULT_MAX_LAG,
                            alpha: float = DEFAULT_ALPHA, difference_first: bool = False,
                            workers: int = 0) -> tp.Tuple[GrangerResult, GrangerResult]:
    return (granger_test(news, impressions, max_lag, alpha, difference_first, workers),
            granger_test(impressions, news, max_lag, alpha, difference_first, workers))
