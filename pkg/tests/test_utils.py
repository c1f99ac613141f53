import pytest

from adlens.utils import atomic_output, derive_seed, human_seconds, ordered_map, stable_sum


class TestSeeds:
    def test_derived_seeds_are_stable_and_distinct(self):
        assert derive_seed(0, 1) == derive_seed(0, 1)
        assert len({derive_seed(0, i) for i in range(100)}) == 100
        assert derive_seed(0, 1) != derive_seed(1, 0)
        assert 0 <= derive_seed(42, 7) < 2 ** 32


class TestHelpers:
    @pytest.mark.parametrize("seconds,text", [(0.0002, "200.00 us"), (2.5, "2.50 s"), (90, "1.50 min")])
    def test_human_seconds(self, seconds, text):
        assert human_seconds(seconds) == text

    def test_stable_sum_ignores_order(self):
        values = [1e16, 1.0, -1e16, 1.0]
        assert stable_sum(values) == stable_sum(reversed(values)) == 2.0

    @pytest.mark.parametrize("workers", [0, 4])
    def test_ordered_map_keeps_order(self, workers):
        assert ordered_map(lambda x: x * x, range(20), workers) == [x * x for x in range(20)]


class TestAtomicOutput:
    def test_replaces_target_on_success(self, tmp_path):
        target = tmp_path / "out"
        target.mkdir()
        (target / "old.txt").write_text("old")
        with atomic_output(target) as tmp:
            (tmp / "new.txt").write_text("new")
        assert sorted(p.name for p in target.iterdir()) == ["new.txt"]
        assert not (tmp_path / "out.tmp").exists()

    def test_keeps_target_on_failure(self, tmp_path):
        target = tmp_path / "table.csv"
        target.write_text("old")
        with pytest.raises(RuntimeError):
            with atomic_output(target, directory=False) as tmp:
                tmp.write_text("half")
                raise RuntimeError("boom")
        assert target.read_text() == "old"
        assert not tmp.exists()
