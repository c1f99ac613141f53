"""Static SVG charts for the report.

Every drawn bar carries a `gid` so its geometry can be read back from the file
and compared against the table written next to it.
"""
from contextlib import contextmanager
from datetime import date
from pathlib import Path
import re
import typing as tp
from xml.etree import ElementTree

import matplotlib
import matplotlib.dates as mdates
from matplotlib.figure import Figure
from matplotlib.patches import Patch
from matplotlib.ticker import FuncFormatter
import pandas as pd

from .agenda import GrangerResult, TimeSeries
from .audience import ImpressionMatrix
from .errors import ValidationError
from .ingest import AGE_BUCKETS

# fixed salt and no embedded date keep the bytes identical between runs
SVG_RC = {
    "svg.hashsalt": "adlens",
    "svg.fonttype": "none",
    # every vertex stays in the file so lines can be read back
    "path.simplify": False,
    "font.family": "DejaVu Sans",
    "axes.spines.top": False,
    "axes.spines.right": False,
}
COLORS = {
    "male": "#3b6ea5",
    "female": "#c0504d",
    "significant": "#c0504d",
    "plain": "#9e9e9e",
    "event": "#555555",
}
SERIES_COLORS = ("#3b6ea5", "#c0504d", "#6a9e3f", "#8064a2", "#f79646")

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:e[-+]?\d+)?")
_SVG_NS = "{http://www.w3.org/2000/svg}"


@contextmanager
def _canvas(path: tp.Union[str, Path], size: tp.Tuple[float, float] = (8.0, 5.0)):
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=size)
        yield fig
        fig.savefig(path, format="svg", metadata={"Date": None})


def _thousands(value, _pos):
    return f"{abs(value):,.0f}"


def render_pyramid(matrix: ImpressionMatrix, path: tp.Union[str, Path], title: str = "") -> Path:
    """Male impressions to the left, female to the right, one row per age bucket.

    Only non-empty cells are drawn; each bar has gid `bar-<gender>-<age>`.
    """
    cells = [(g, a, matrix.cell(g, a)) for g in ("male", "female") for a in AGE_BUCKETS
             if matrix.cell(g, a) > 0]
    if not cells:
        raise ValidationError("pyramid has no male or female impressions to draw")
    path = Path(path)
    with _canvas(path) as fig:
        ax = fig.add_subplot()
        for gender, age, value in cells:
            width = -value if gender == "male" else value
            bars = ax.barh([AGE_BUCKETS.index(age)], [width], height=0.8, color=COLORS[gender])
            bars.patches[0].set_gid(f"bar-{gender}-{age}")
        ax.axvline(0, color="black", linewidth=0.8)
        ax.set_yticks(range(len(AGE_BUCKETS)))
        ax.set_yticklabels(AGE_BUCKETS)
        ax.xaxis.set_major_formatter(FuncFormatter(_thousands))
        ax.set_xlabel("estimated impressions (male | female)")
        ax.set_title(title)
    return path


def render_series(series: tp.Sequence[TimeSeries], path: tp.Union[str, Path],
                  events: tp.Sequence[tp.Tuple[date, str]] = (), title: str = "") -> Path:
    """One line per series plus a labelled vertical marker per event inside the range."""
    series = [s for s in series if len(s)]
    if not series:
        raise ValidationError("no series to draw")
    start = min(s.start for s in series)
    end = max(s.end for s in series)
    path = Path(path)
    with _canvas(path, (10.0, 5.0)) as fig:
        ax = fig.add_subplot()
        for i, s in enumerate(series):
            ax.plot(s.dates, s.values, label=s.name, linewidth=1.0,
                    color=SERIES_COLORS[i % len(SERIES_COLORS)], gid=f"series-{s.name}")
        for day, label in events:
            if not start <= day <= end:
                continue
            ax.axvline(mdates.date2num(day), color=COLORS["event"], linestyle="--", linewidth=0.8,
                       gid=f"event-{day.isoformat()}")
            ax.text(mdates.date2num(day), 1.0, label, rotation=90, fontsize=7, va="top", ha="right",
                    transform=ax.get_xaxis_transform())
        ax.xaxis.set_major_locator(mdates.MonthLocator())
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m"))
        for tick in ax.get_xticklabels():
            tick.set_rotation(45)
        ax.set_xlim(start, end)
        ax.legend(loc="upper left", fontsize=8)
        ax.set_title(title)
    return path


def render_granger(results: tp.Sequence[GrangerResult], path: tp.Union[str, Path], title: str = "") -> Path:
    """F statistic per lag, one bar group per direction; lags with p < alpha are highlighted."""
    if not results or not any(r.lags for r in results):
        raise ValidationError("no Granger results to draw")
    path = Path(path)
    width = 0.8 / len(results)
    with _canvas(path, (10.0, 5.0)) as fig:
        ax = fig.add_subplot()
        for i, result in enumerate(results):
            offset = (i - (len(results) - 1) / 2) * width
            for test in result.lags:
                color = COLORS["significant"] if test.significant else SERIES_COLORS[i % len(SERIES_COLORS)]
                bars = ax.bar([test.lag + offset], [test.f_stat], width=width, color=color,
                              edgecolor="black" if test.significant else "none", linewidth=0.6)
                bars.patches[0].set_gid(f"lag-{result.cause}-{result.effect}-{test.lag}")
        lags = sorted({test.lag for r in results for test in r.lags})
        ax.set_xticks(lags)
        ax.set_xlabel("lag (days)")
        ax.set_ylabel("F statistic")
        handles = [Patch(color=SERIES_COLORS[i % len(SERIES_COLORS)], label=f"{r.cause} -> {r.effect}")
                   for i, r in enumerate(results)]
        handles.append(Patch(color=COLORS["significant"], label="p < alpha"))
        ax.legend(handles=handles, fontsize=8)
        ax.set_title(title)
    return path


def render_histogram(table: pd.DataFrame, key: str, path: tp.Union[str, Path],
                     value: str = "impressions", title: str = "") -> Path:
    """Vertical bars of `table[value]` over `table[key]`, gid `bin-<key>`; zero rows are skipped."""
    rows = [(k, v) for k, v in zip(table[key], table[value]) if v > 0]
    if not rows:
        raise ValidationError(f"histogram over {key} is empty")
    path = Path(path)
    with _canvas(path) as fig:
        ax = fig.add_subplot()
        for k, v in rows:
            bars = ax.bar([k], [v], width=0.8, color=COLORS["plain"])
            bars.patches[0].set_gid(f"bin-{k}")
        ax.set_xticks(list(table[key]))
        ax.yaxis.set_major_formatter(FuncFormatter(_thousands))
        ax.set_xlabel(key.replace("_", " "))
        ax.set_ylabel(value)
        ax.set_title(title)
    return path


def bar_geometry(path: tp.Union[str, Path], prefix: str = "") -> tp.Dict[str, tp.Tuple[float, float]]:
    """Pixel (width, height) of every gid-tagged bar in an SVG written by this module."""
    geometry = {}
    for element in ElementTree.parse(str(path)).iter():
        gid = element.get("id", "")
        if not gid.startswith(prefix) or not gid.startswith(("bar-", "lag-", "bin-")):
            continue
        shape = element.find(f"{_SVG_NS}path")
        if shape is None:
            continue
        numbers = [float(n) for n in _NUMBER_RE.findall(shape.get("d", ""))]
        xs, ys = numbers[0::2], numbers[1::2]
        geometry[gid] = (max(xs) - min(xs), max(ys) - min(ys))
    return geometry


def line_points(path: tp.Union[str, Path], gid: str) -> tp.List[tp.Tuple[float, float]]:
    """Pixel vertices of the line drawn with `gid`, in drawing order."""
    for element in ElementTree.parse(str(path)).iter():
        if element.get("id") != gid:
            continue
        shape = element if element.tag == f"{_SVG_NS}path" else element.find(f"{_SVG_NS}path")
        if shape is None:
            break
        numbers = [float(n) for n in _NUMBER_RE.findall(shape.get("d", ""))]
        return list(zip(numbers[0::2], numbers[1::2]))
    raise ValidationError(f"no line with gid {gid!r} in {path}")
