import json
from pathlib import Path

from loguru import logger
import numpy as np
import pandas as pd
import pytest
import yaml

from adlens import charts
from adlens.__main__ import main


@pytest.fixture(autouse=True)
def detach_logging():
    yield
    # main() points loguru at the captured stderr of the test that called it
    logger.remove()


def error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith("adlens-error")]


def variant(bundle_dir: Path, name: str, **changes) -> Path:
    """A copy of the synthetic run config with some keys replaced, next to the original."""
    raw = yaml.safe_load((bundle_dir / "adlens.yaml").read_text(encoding="utf-8"))
    raw.update(changes)
    path = bundle_dir / f"{name}.yaml"
    path.write_text(yaml.safe_dump(raw, sort_keys=True), encoding="utf-8")
    return path


def assert_line_follows(points, values):
    """Vertices sit on an even day grid and map linearly onto the table values."""
    values = np.asarray(values, dtype=float)
    assert len(points) == len(values)
    xs, ys = np.array(points).T
    np.testing.assert_allclose(np.diff(xs), np.diff(xs).mean(), atol=0.01)
    if np.ptp(values) == 0:
        assert np.ptp(ys) < 0.01
        return
    slope, intercept = np.polyfit(values, ys, 1)
    assert slope < 0
    np.testing.assert_allclose(ys, slope * values + intercept, atol=0.01)


@pytest.fixture(scope="module")
def reports(bundle_dir, tmp_path_factory):
    outs = [tmp_path_factory.mktemp(f"report{i}") for i in range(2)]
    codes = [main(["report", "-c", str(bundle_dir / "adlens.yaml"), "--out", str(out)]) for out in outs]
    return codes, [out / "report" for out in outs]


class TestSynth:
    def test_same_seed_same_bundle(self, bundle_dir, tmp_path):
        assert main(["synth", "--out", str(tmp_path)]) == 0
        for name in ("adlens.yaml", "truth.csv", "survey.csv"):
            assert (tmp_path / name).read_bytes() == (bundle_dir / name).read_bytes(), name


class TestReport:
    def test_exit_code(self, reports):
        codes, _ = reports
        assert codes == [0, 0]

    def test_runs_are_byte_identical(self, reports):
        _, (first, second) = reports
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_every_chart_has_a_table(self, reports):
        _, (report, _) = reports
        summary = json.loads((report / "summary.json").read_text(encoding="utf-8"))
        assert summary["charts"]
        for name in summary["charts"]:
            assert (report / f"{name}.svg").is_file()
            assert (report / f"{name}.csv").is_file()
        assert {"stance_shares", "odds_ratios", "targeting", "granger_all", "survey_distances",
                "top_features_leaning"} <= set(summary["tables"])

    def test_pyramid_matches_its_table(self, reports):
        _, (report, _) = reports
        table = pd.read_csv(report / "demographics_all.csv", dtype={"gender": str, "age": str})
        values = {f"bar-{g}-{a}": v for g, a, v in zip(table["gender"], table["age"], table["impressions"])}
        bars = charts.bar_geometry(report / "demographics_all.svg", "bar-")
        assert set(bars) == {k for k, v in values.items() if v > 0 and not k.startswith("bar-unknown")}
        largest = max(values, key=values.get)
        scale = bars[largest][0] / values[largest]
        for gid, (width, _) in bars.items():
            if values[gid] >= 0.01 * values[largest]:
                assert width == pytest.approx(scale * values[gid], rel=1e-3), gid

    def test_granger_chart_matches_its_table(self, reports):
        _, (report, _) = reports
        table = pd.read_csv(report / "granger_all.csv")
        bars = charts.bar_geometry(report / "granger_all.svg", "lag-")
        assert len(bars) == len(table)
        f_stats = {f"lag-{c}-{e}-{l}": f for c, e, l, f in
                   zip(table["cause"], table["effect"], table["lag"], table["f_stat"])}
        largest = max(f_stats, key=f_stats.get)
        scale = bars[largest][1] / f_stats[largest]
        for gid, (_, height) in bars.items():
            if f_stats[gid] >= 0.01 * f_stats[largest]:
                assert height == pytest.approx(scale * f_stats[gid], rel=1e-3), gid

    def test_series_charts_match_their_tables(self, reports):
        _, (report, _) = reports
        news = pd.read_csv(report / "news_series.csv")
        assert_line_follows(charts.line_points(report / "news_series.svg", "series-news"), news["value"])
        impressions = pd.read_csv(report / "impressions_series.csv")
        for name in ("all", "anti", "pro"):
            points = charts.line_points(report / "impressions_series.svg", f"series-impressions_{name}")
            assert_line_follows(points, impressions[name])

    def test_region_histogram_matches_its_table(self, reports):
        _, (report, _) = reports
        table = pd.read_csv(report / "targeting_regions.csv")
        values = {f"bin-{k}": v for k, v in zip(table["regions_reached"], table["impressions"])}
        bars = charts.bar_geometry(report / "targeting_regions.svg", "bin-")
        assert set(bars) == {k for k, v in values.items() if v > 0}
        largest = max(values, key=values.get)
        scale = bars[largest][1] / values[largest]
        for gid, (_, height) in bars.items():
            if values[gid] >= 0.01 * values[largest]:
                assert height == pytest.approx(scale * values[gid], rel=1e-3), gid

    def test_stance_shares_cover_every_ad(self, reports):
        _, (report, _) = reports
        shares = pd.read_csv(report / "stance_shares.csv")
        stances = pd.read_csv(report / "ad_stances.csv", dtype=str)
        assert list(shares["stance"]) == ["anti", "pro", "neutral_or_irrelevant"]
        assert shares["ads"].sum() == len(stances)
        assert shares["impression_share"].sum() == pytest.approx(1.0)

    def test_everything_switched_off(self, bundle_dir, tmp_path):
        off = {name: False for name in ("stance", "audience", "targeting", "agenda", "features")}
        config = variant(bundle_dir, "all-off", report=off)
        assert main(["report", "-c", str(config), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "report").is_dir()
        assert list((tmp_path / "report").iterdir()) == []


class TestErrors:
    def test_missing_gazetteer(self, bundle_dir, tmp_path, capsys):
        config = variant(bundle_dir, "no-gazetteer", gazetteer="missing.psv")
        assert main(["report", "-c", str(config), "--out", str(tmp_path)]) == 2
        (line,) = error_lines(capsys)
        assert line.startswith('adlens-error code=2 kind=ValidationError message="gazetteer path')
        assert not (tmp_path / "report").exists()

    def test_report_needs_a_period(self, bundle_dir, tmp_path, capsys):
        raw = yaml.safe_load((bundle_dir / "adlens.yaml").read_text(encoding="utf-8"))
        raw.pop("period")
        config = bundle_dir / "no-period.yaml"
        config.write_text(yaml.safe_dump(raw), encoding="utf-8")
        assert main(["report", "-c", str(config), "--out", str(tmp_path)]) == 2
        assert "period is required" in error_lines(capsys)[0]

    def test_missing_out(self, bundle_dir, capsys):
        assert main(["ingest", "-c", str(bundle_dir / "adlens.yaml")]) == 2
        assert "out is required" in error_lines(capsys)[0]

    def test_classify_without_a_model(self, bundle_dir, tmp_path, capsys):
        assert main(["classify", "-c", str(bundle_dir / "adlens.yaml"), "--out", str(tmp_path)]) == 2
        assert "kind=ValidationError" in error_lines(capsys)[0]

    def test_bad_period_flag(self, bundle_dir, tmp_path, capsys):
        code = main(["ingest", "-c", str(bundle_dir / "adlens.yaml"), "--out", str(tmp_path),
                     "--period-start", "2019-02-30"])
        assert code == 2
        assert error_lines(capsys)

    @pytest.mark.parametrize("name,line", [
        ("bad-bytes", b'{"id": "\xff"}\n'),
        ("bad-cells", b'{"id": "1", "page_id": "p", "ad_delivery_start_time": "2019-05-01", '
                      b'"impressions": {"lower_bound": "10"}, "demographic_distribution": [1]}\n'),
    ])
    def test_malformed_archive_is_a_data_error(self, bundle_dir, tmp_path, capsys, name, line):
        broken = bundle_dir / name
        broken.mkdir(exist_ok=True)
        (broken / "ads.jsonl").write_bytes(line)
        (broken / "manifest.yaml").write_text("ads: ads.jsonl\n", encoding="utf-8")
        config = variant(bundle_dir, name, dataset=f"{name}/manifest.yaml")
        assert main(["ingest", "-c", str(config), "--out", str(tmp_path)]) == 3
        (error,) = error_lines(capsys)
        assert "kind=ParseError" in error
        assert not (tmp_path / "dataset").exists()


class TestStages:
    def test_ingest_train_classify(self, bundle_dir, tmp_path, truth):
        config = str(bundle_dir / "adlens.yaml")
        for command in ("ingest", "train", "classify"):
            assert main([command, "-c", config, "--out", str(tmp_path)]) == 0, command
        assert (tmp_path / "dataset").is_dir()
        assert list((tmp_path / "models").glob("stance-*.joblib"))
        stances = pd.read_csv(tmp_path / "stances.csv", dtype=str)
        planted = dict(zip(truth["ad_id"], truth["stance"]))
        hits = sum(planted[a] == s for a, s in zip(stances["ad_id"], stances["stance"]))
        assert hits / len(stances) >= 0.9

    def test_resolve(self, bundle_dir, tmp_path):
        assert main(["resolve", "-c", str(bundle_dir / "adlens.yaml"), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "resolved").is_dir()
        assert not (tmp_path / "resolved.tmp").exists()
