from datetime import date

import numpy as np
import pandas as pd
import pytest

from adlens import charts
from adlens.agenda import GrangerResult, LagTest, TimeSeries
from adlens.audience import ImpressionMatrix
from adlens.errors import ValidationError
from adlens.ingest import AGE_BUCKETS, GENDERS


def matrix() -> ImpressionMatrix:
    cells = np.zeros((len(GENDERS), len(AGE_BUCKETS)))
    cells[GENDERS.index("male"), AGE_BUCKETS.index("25-34")] = 100.0
    cells[GENDERS.index("female"), AGE_BUCKETS.index("25-34")] = 300.0
    cells[GENDERS.index("male"), AGE_BUCKETS.index("65+")] = 200.0
    cells[GENDERS.index("unknown"), AGE_BUCKETS.index("65+")] = 50.0
    return ImpressionMatrix(cells, 3)


def lag(n, f_stat, significant=False):
    return LagTest(n, f_stat, 0.001 if significant else 0.5, 1.0, 1.0, 100, n, 100 - 3 * n, significant)


class TestPyramid:
    def test_bar_widths_follow_the_table(self, tmp_path):
        path = charts.render_pyramid(matrix(), tmp_path / "pyramid.svg")
        bars = charts.bar_geometry(path, "bar-")
        assert sorted(bars) == ["bar-female-25-34", "bar-male-25-34", "bar-male-65+"]
        male = bars["bar-male-25-34"][0]
        assert bars["bar-female-25-34"][0] == pytest.approx(3 * male, rel=1e-3)
        assert bars["bar-male-65+"][0] == pytest.approx(2 * male, rel=1e-3)
        assert bars["bar-male-65+"][1] == pytest.approx(bars["bar-female-25-34"][1], rel=1e-3)

    def test_same_input_same_bytes(self, tmp_path):
        a = charts.render_pyramid(matrix(), tmp_path / "a.svg", "title")
        b = charts.render_pyramid(matrix(), tmp_path / "b.svg", "title")
        assert a.read_bytes() == b.read_bytes()

    def test_empty_matrix(self, tmp_path):
        with pytest.raises(ValidationError):
            charts.render_pyramid(ImpressionMatrix(np.zeros((len(GENDERS), len(AGE_BUCKETS))), 0),
                                  tmp_path / "empty.svg")


class TestOtherCharts:
    def test_histogram_skips_empty_bins(self, tmp_path):
        table = pd.DataFrame({"regions_reached": [0, 1, 2, 3], "impressions": [0.0, 300.0, 0.0, 100.0]})
        bars = charts.bar_geometry(charts.render_histogram(table, "regions_reached", tmp_path / "h.svg"))
        assert sorted(bars) == ["bin-1", "bin-3"]
        assert bars["bin-1"][1] == pytest.approx(3 * bars["bin-3"][1], rel=1e-3)

    def test_empty_histogram(self, tmp_path):
        table = pd.DataFrame({"k": [0, 1], "impressions": [0.0, 0.0]})
        with pytest.raises(ValidationError):
            charts.render_histogram(table, "k", tmp_path / "h.svg")

    def test_granger_bars(self, tmp_path):
        results = [GrangerResult("news", "ads", (lag(1, 2.0), lag(2, 8.0, True))),
                   GrangerResult("ads", "news", (lag(1, 1.0), lag(2, 4.0)))]
        bars = charts.bar_geometry(charts.render_granger(results, tmp_path / "g.svg"), "lag-")
        assert len(bars) == 4
        assert bars["lag-news-ads-2"][1] == pytest.approx(4 * bars["lag-news-ads-1"][1], rel=1e-3)
        assert bars["lag-ads-news-2"][1] == pytest.approx(2 * bars["lag-news-ads-1"][1], rel=1e-3)

    def test_series_with_events(self, tmp_path):
        series = TimeSeries(date(2019, 1, 1), np.linspace(0.0, 1.0, 60), "news")
        events = [(date(2019, 1, 15), "inside"), (date(2020, 1, 1), "outside")]
        text = charts.render_series([series], tmp_path / "s.svg", events).read_text(encoding="utf-8")
        assert 'id="series-news"' in text
        assert 'id="event-2019-01-15"' in text
        assert "event-2020-01-01" not in text

    def test_no_series(self, tmp_path):
        with pytest.raises(ValidationError):
            charts.render_series([], tmp_path / "s.svg")

    def test_series_vertices_follow_the_values(self, tmp_path):
        values = np.abs(np.sin(np.arange(400) / 7.0))
        series = TimeSeries(date(2019, 1, 1), values, "news")
        points = charts.line_points(charts.render_series([series], tmp_path / "s.svg"), "series-news")
        assert len(points) == len(values)
        xs, ys = np.array(points).T
        np.testing.assert_allclose(np.diff(xs), np.diff(xs).mean(), atol=0.01)
        slope, intercept = np.polyfit(values, ys, 1)
        assert slope < 0
        np.testing.assert_allclose(ys, slope * values + intercept, atol=0.01)

    def test_unknown_line(self, tmp_path):
        path = charts.render_series([TimeSeries(date(2019, 1, 1), [1.0, 2.0], "news")], tmp_path / "s.svg")
        with pytest.raises(ValidationError):
            charts.line_points(path, "series-ads")
