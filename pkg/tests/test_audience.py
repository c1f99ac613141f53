from fractions import Fraction

import numpy as np
import pytest

from adlens import audience
from adlens.audience import (FEMALE_ONLY, MALE_ONLY, NOT_EXCLUSIVE, ImpressionMatrix, PopulationShares,
                             SurveyDistribution)
from adlens.entities import PageEntity
from adlens.errors import DataError, ValidationError
from adlens.ingest import ADULT_BUCKETS, AGE_BUCKETS, GENDERS

REGIONS = ("Lazio", "Lombardia", "Sicilia")


def everywhere(ages=ADULT_BUCKETS, genders=("male", "female")):
    share = 1.0 / (len(ages) * len(genders))
    return {(g, a): share for g in genders for a in ages}


class TestImpressions:
    def test_mass_is_conserved(self, make_ad):
        ads = [make_ad("1", lower=1000, upper=3000, cells={("male", "25-34"): 0.25, ("female", "25-34"): 0.75}),
               make_ad("2", lower=100, upper=300, cells={("unknown", "65+"): 1.0})]
        m = audience.impressions_by_demographic(ads)
        assert m.total == pytest.approx(2200.0)
        assert m.cell("female", "25-34") == pytest.approx(1500.0)
        assert m.ads_count == 2

    def test_unknown_gender_can_be_dropped(self, make_ad):
        ads = [make_ad(cells={("unknown", "65+"): 0.5, ("male", "65+"): 0.5}, lower=100, upper=100)]
        m = audience.impressions_by_demographic(ads, drop_unknown_gender=True)
        assert m.total == 50.0
        assert len(m.to_frame(drop_unknown_gender=True)) == 2 * len(AGE_BUCKETS)

    def test_matrices_add(self):
        a = ImpressionMatrix(np.ones((3, 7)), 1)
        b = ImpressionMatrix(np.full((3, 7), 2.0), 2)
        assert (a + b).total == 63.0
        assert (a + b).ads_count == 3

    def test_negative_cells_are_rejected(self):
        with pytest.raises(ValueError):
            ImpressionMatrix(-np.ones((3, 7)), 1)


class TestOdds:
    def matrix(self, male, female):
        cells = np.zeros((len(GENDERS), len(AGE_BUCKETS)))
        cells[0, 2], cells[1, 2] = male, female
        return ImpressionMatrix(cells, 1)

    def test_odds_are_exact(self):
        result = audience.gender_odds(self.matrix(300.0, 200.0))
        assert result.ratio == Fraction(3, 2)
        assert result.value == 1.5

    def test_ratio_is_reciprocal(self):
        a, b = self.matrix(620.0, 340.0), self.matrix(400.0, 560.0)
        forward = audience.gender_odds_ratio(a, b)
        backward = audience.gender_odds_ratio(b, a)
        assert forward.ratio * backward.ratio == 1

    def test_zero_female_impressions_is_undefined(self):
        result = audience.gender_odds_ratio(self.matrix(10.0, 0.0), self.matrix(1.0, 1.0))
        assert not result.defined
        assert np.isnan(result.value)


class TestTargeting:
    def test_untargeted_without_minors(self, make_ad):
        ad = make_ad(cells=everywhere(), regions=[(r, 1 / 3) for r in REGIONS])
        profile = audience.detect_targeting(ad, REGIONS)
        assert profile.gender_exclusive == NOT_EXCLUSIVE
        assert audience.is_untargeted(profile, len(REGIONS))

    def test_untargeted_with_minors(self, make_ad):
        ad = make_ad(cells=everywhere(AGE_BUCKETS), regions=[(r, 1 / 3) for r in REGIONS])
        assert audience.is_untargeted(audience.detect_targeting(ad, REGIONS), len(REGIONS))

    def test_missing_adult_bucket_is_targeting(self, make_ad):
        ad = make_ad(cells=everywhere(ADULT_BUCKETS[1:]), regions=[(r, 1 / 3) for r in REGIONS])
        profile = audience.detect_targeting(ad, REGIONS)
        assert len(profile.age_buckets_reached) == 5
        assert not audience.is_untargeted(profile, len(REGIONS))

    def test_gender_exclusive(self, make_ad):
        male = make_ad(cells=everywhere(genders=("male",)))
        female = make_ad(cells=everywhere(genders=("female", "unknown")))
        assert audience.detect_targeting(male, REGIONS).gender_exclusive == MALE_ONLY
        assert audience.detect_targeting(female, REGIONS).gender_exclusive == FEMALE_ONLY

    def test_epsilon_ignores_tiny_shares(self, make_ad):
        ad = make_ad(regions=[("Lazio", 0.995), ("Sicilia", 0.005)])
        assert audience.detect_targeting(ad, REGIONS).regions_reached == 2
        assert audience.detect_targeting(ad, REGIONS, epsilon=0.01).regions_reached == 1

    def test_unknown_regions_are_reported(self, make_ad):
        ad = make_ad(regions=[("Lazio", 0.5), ("Atlantide", 0.5)])
        profile = audience.detect_targeting(ad, REGIONS)
        assert profile.regions_reached == 1
        assert profile.unknown_regions == ("Atlantide",)

    def test_summary_histograms(self, make_ad):
        ads = [make_ad("1", lower=100, upper=100, cells=everywhere(), regions=[(r, 1 / 3) for r in REGIONS]),
               make_ad("2", lower=300, upper=300, cells=everywhere(), regions=[("Lazio", 1.0)])]
        summary = audience.targeting_summary(ads, REGIONS)
        assert summary.targeted_share == 0.75
        assert (summary.targeted_ads, summary.untargeted_ads) == (1, 1)
        assert list(summary.regions_histogram["impressions"]) == [0.0, 300.0, 0.0, 100.0]
        assert summary.buckets_histogram.loc[6, "ads"] == 2

    def test_synthetic_targeted_share(self, bundle_inputs, truth):
        _, dataset = bundle_inputs
        summary = audience.targeting_summary(dataset.ads)
        assert summary.targeted_share == pytest.approx(0.62, abs=0.005)
        assert summary.targeted_ads == 12 * 31

    def test_synthetic_untargeted_ads_with_minors(self, bundle_inputs, truth):
        _, dataset = bundle_inputs
        regions = audience.load_regions()
        kind = dict(zip(truth["ad_id"], truth["targeting"]))
        for ad in dataset.ads:
            if kind[ad.id].startswith("untargeted"):
                assert audience.is_untargeted(audience.detect_targeting(ad, regions), len(regions)), ad.id


class TestNormalization:
    POPULATION = PopulationShares({("male", "18-24"): 0.25, ("female", "18-24"): 0.25,
                                   ("male", "65+"): 0.25, ("female", "65+"): 0.25})

    def test_rescales_by_population_over_audience(self):
        impressions = {("male", "18-24"): 100.0, ("female", "18-24"): 100.0,
                       ("male", "65+"): 100.0, ("female", "65+"): 0.0}
        potential = {("male", "18-24"): 1000.0, ("female", "18-24"): 1000.0,
                     ("male", "65+"): 250.0, ("female", "65+"): 250.0}
        shares = audience.normalize_to_population(impressions, potential, self.POPULATION)
        assert sum(shares.values()) == pytest.approx(1.0)
        assert shares[("male", "65+")] == pytest.approx(4 * shares[("male", "18-24")])
        assert shares[("female", "65+")] == 0.0

    def test_zero_audience_with_impressions(self):
        with pytest.raises(DataError):
            audience.normalize_to_population({("male", "65+"): 1.0}, {("male", "65+"): 0.0}, self.POPULATION)

    def test_population_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            PopulationShares({("male", "65+"): 0.5})


class TestCoarsening:
    def test_drops_minors_and_renormalizes(self):
        fine = {"13-17": 0.2, "18-24": 0.1, "25-34": 0.1, "35-44": 0.1, "45-54": 0.1, "55-64": 0.2, "65+": 0.2}
        coarse = audience.coarsen_age_buckets(fine)
        assert coarse.shares == pytest.approx({"18-34": 0.25, "35-64": 0.5, "65+": 0.25})

    def test_empty_distribution_is_undefined(self):
        assert not audience.coarsen_age_buckets({}).defined

    def test_age_distribution_sums_genders(self):
        groups = {("male", "18-24"): 1.0, ("female", "18-24"): 1.0, ("male", "65+"): 2.0}
        d = audience.age_distribution(groups)
        assert d["18-24"] == 0.5 and d["65+"] == 0.5 and d["13-17"] == 0.0

    def test_total_variation(self):
        assert audience.tv_distance({"a": 0.5, "b": 0.5}, {"a": 1.0}) == 0.5


class TestSurvey:
    def test_survey_buckets_are_checked(self):
        with pytest.raises(ValidationError):
            SurveyDistribution({"PD": {"18-30": 1.0}})
        with pytest.raises(ValidationError):
            SurveyDistribution({"PD": {"18-34": 0.5, "35-64": 0.2, "65+": 0.2}})

    def test_missing_party_is_flagged(self):
        survey = SurveyDistribution({"PD": {"18-34": 0.2, "35-64": 0.5, "65+": 0.3}})
        ads = {"PD": {"18-34": 0.3, "35-64": 0.5, "65+": 0.2}, "Lega": {"18-34": 1.0, "35-64": 0.0, "65+": 0.0}}
        comparison = audience.compare_to_survey(ads, ads, survey)
        distances = comparison.distances.set_index("party")
        assert distances.loc["PD", "tv_all_survey"] == pytest.approx(0.1)
        assert distances.loc["PD", "tv_all_migration"] == 0.0
        assert not distances.loc["Lega", "complete"]
        assert np.isnan(distances.loc["Lega", "tv_all_survey"])
        assert len(comparison.table) == 2 * 3

    def test_synthetic_survey_tables_load(self, bundle_dir):
        survey = audience.load_survey(bundle_dir / "survey.csv")
        assert sorted(survey.shares) == ["Lega", "PD"]
        potential = audience.load_potential_audience(bundle_dir / "potential_audience.csv")
        assert potential.for_party("Lega")[("male", "18-24")] > 0
        audience.load_population(bundle_dir / "population.csv")
        with pytest.raises(DataError):
            potential.for_party("Azione")


class TestPartyStance:
    def test_only_major_parties_are_counted(self, make_ad):
        pages = [PageEntity("p1", "Lega", "party", "Lega"), PageEntity("p2", "Onlus", "ngo")]
        ads = [make_ad("1", page_id="p1", lower=100, upper=100), make_ad("2", page_id="p1", lower=100, upper=100),
               make_ad("3", page_id="p2", lower=100, upper=100)]
        table = audience.party_stance_table(ads, pages, {"1": "anti", "2": "anti", "3": "pro"})
        assert table.to_dict("records") == [{"party": "Lega", "stance": "anti", "ads": 2, "impressions": 200.0}]
