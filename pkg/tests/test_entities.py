from datetime import datetime

import pytest

from adlens import entities
from adlens.entities import NO_PARTY, UNRESOLVED, Gazetteer, GazetteerEntry, PageEntity
from adlens.errors import GazetteerError
from adlens.report import resolve_dataset

GAZETTEER = Gazetteer([
    GazetteerEntry("lega", "party", "Lega"),
    GazetteerEntry("lega salvini premier", "party", "Lega"),
    GazetteerEntry("marco bellini", "politician", "Lega"),
    GazetteerEntry("porto aperto", "ngo"),
    GazetteerEntry("verifica fatti", "fact_checker"),
])


class TestNormalization:
    def test_punctuation_and_case(self):
        assert entities.normalize_name("  Fratelli d'Italia!! ") == "fratelli d italia"

    def test_diacritics_are_kept(self):
        assert entities.normalize_name("Università di Bologna") == "università di bologna"

    def test_ngrams_longest_then_leftmost(self):
        assert list(entities.ngrams(["a", "b", "c"])) == ["a b c", "a b", "b c", "a", "b", "c"]


class TestGazetteer:
    def test_identical_duplicates_collapse(self):
        entry = GazetteerEntry("lega", "party", "Lega")
        assert len(Gazetteer([entry, entry])) == 1

    def test_conflicting_duplicates_are_rejected(self):
        with pytest.raises(GazetteerError):
            Gazetteer([GazetteerEntry("lega", "party", "Lega"), GazetteerEntry("lega", "ngo")])

    @pytest.mark.parametrize("args", [("Lega", "party", "Lega"), ("lega", "club", "Lega"),
                                      ("lega", "party", "Forza"), ("lega", "party", NO_PARTY)])
    def test_invalid_entries(self, args):
        with pytest.raises(GazetteerError):
            GazetteerEntry(*args)

    def test_bundled_gazetteer_loads(self):
        gazetteer = entities.load_gazetteer()
        assert gazetteer.get("partito democratico").party_affiliation == "PD"
        assert gazetteer.get("camera del lavoro").actor_type == "trade_union"

    def test_missing_column(self, tmp_path):
        path = tmp_path / "g.psv"
        path.write_text("surface_form|actor_type\nlega|party\n", encoding="utf-8")
        with pytest.raises(GazetteerError):
            entities.load_gazetteer(path)


class TestResolution:
    def test_longest_match_wins(self):
        page = entities.resolve_page("LEGA Salvini Premier - Lombardia", GAZETTEER, "p1")
        assert page.matched_ngram == "lega salvini premier"
        assert (page.actor_type, page.party_affiliation) == ("party", "Lega")

    def test_politician_inside_longer_name(self):
        page = entities.resolve_page("On. Marco Bellini (ufficiale)", GAZETTEER)
        assert (page.actor_type, page.party_affiliation) == ("politician", "Lega")

    def test_leftmost_among_equal_lengths(self):
        page = entities.resolve_page("Verifica Fatti e Porto Aperto", GAZETTEER)
        assert page.actor_type == "fact_checker"

    def test_non_party_actor_has_no_affiliation(self):
        page = entities.resolve_page("Porto Aperto Onlus", GAZETTEER)
        assert (page.actor_type, page.party_affiliation) == ("ngo", NO_PARTY)

    def test_unknown_page_stays_unresolved(self):
        page = entities.resolve_page("Comitato Quartiere Sereno", GAZETTEER, "p9")
        assert page == PageEntity("p9", "Comitato Quartiere Sereno")
        assert not page.resolved

    def test_unresolved_page_cannot_carry_a_party(self):
        with pytest.raises(ValueError):
            PageEntity("p", "x", UNRESOLVED, "Lega")

    def test_latest_snapshot_names_the_page(self, make_ad):
        ads = [make_ad("1", page_id="p", page_name="Verifica Fatti", snapshot_time=datetime(2019, 1, 1)),
               make_ad("2", page_id="p", page_name="Lega", snapshot_time=datetime(2019, 6, 1))]
        pages = entities.resolve_pages(ads, GAZETTEER)
        assert [(p.page_id, p.name, p.actor_type) for p in pages] == [("p", "Lega", "party")]


class TestRollups:
    def test_affiliation_counts_follow_party_order(self):
        pages = [PageEntity("1", "a", "party", "Lega"), PageEntity("2", "b", "politician", "PD"),
                 PageEntity("3", "c", "politician", "Lega"), PageEntity("4", "d", "ngo")]
        assert entities.affiliation_rollup(pages) == {"PD": 1, "Lega": 2}

    def test_actor_types_by_impressions(self, make_ad):
        pages = [PageEntity("1", "a", "party", "Lega"), PageEntity("2", "b", "ngo")]
        ads = [make_ad("x", page_id="1", lower=100, upper=100), make_ad("y", page_id="2", lower=300, upper=300),
               make_ad("z", page_id="3", lower=100, upper=100)]
        frame = entities.actor_type_rollup(pages, ads)
        assert list(frame["actor_type"]) == ["ngo", "party", UNRESOLVED]
        assert frame["impression_share"].sum() == pytest.approx(1.0)
        assert frame.loc[0, "impressions"] == 300.0

    def test_synthetic_pages_resolve(self, bundle_inputs, bundle_config):
        _, dataset = bundle_inputs
        pages = resolve_dataset(bundle_config, dataset).page_index
        assert pages["page-04"].party_affiliation == "FdI"
        assert pages["page-14"].actor_type == "university"
        assert pages["page-17"].actor_type == UNRESOLVED
