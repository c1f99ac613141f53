import pytest

from adlens import agenda, report
from adlens.annotation import AnnotationRecord
from adlens.errors import DegenerateSeriesError, UndefinedResultError


@pytest.fixture
def context(bundle_config, bundle_inputs, truth):
    raw, dataset = bundle_inputs
    planted = dict(zip(truth["ad_id"], truth["stance"]))
    stances = {ad.id: planted.get(ad.id, "neutral_or_irrelevant") for ad in dataset.ads}
    return report.ReportContext(bundle_config, raw, dataset, stances, None)


def failing_for(subset: str, error: Exception):
    original = agenda.granger_both_directions

    def granger(news, impressions, *args):
        if impressions.name == f"impressions_{subset}":
            raise error
        return original(news, impressions, *args)
    return granger


class TestAgendaSection:
    @pytest.mark.parametrize("error", [DegenerateSeriesError("impressions_pro is constant"),
                                       UndefinedResultError("no residual variance")])
    def test_numeric_failure_skips_one_subset(self, context, monkeypatch, error):
        monkeypatch.setattr(agenda, "granger_both_directions", failing_for("pro", error))
        bundle = report.ReportBundle()
        report._agenda_section(context, bundle)
        assert {"granger_all", "granger_anti"} <= set(bundle.tables)
        assert "granger_pro" not in bundle.tables
        assert "granger_pro" not in bundle.charts
        assert {"news_series", "impressions_series"} <= set(bundle.charts)

    def test_every_subset_is_tested(self, context):
        bundle = report.ReportBundle()
        report._agenda_section(context, bundle)
        assert {"granger_all", "granger_anti", "granger_pro"} <= set(bundle.charts)


class TestAgreementTable:
    def test_too_few_pairable_ads(self):
        records = [AnnotationRecord("a", "x", 4), AnnotationRecord("a", "y", 5), AnnotationRecord("b", "x", 2)]
        assert report._agreement_table(records) is None

    def test_synthetic_annotations(self, bundle_inputs):
        raw, _ = bundle_inputs
        table = report._agreement_table(raw.annotations)
        assert list(table["measure"]) == ["likert_ordinal", "polarity_nominal"]
