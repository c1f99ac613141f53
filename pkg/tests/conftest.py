from datetime import date, datetime
from pathlib import Path

import pandas as pd
import pytest

from adlens import synth
from adlens.config import load_config
from adlens.ingest import AdRecord, DemographicCell, RangedValue
from adlens.report import load_inputs

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def make_ad():
    """Factory for small hand-built ads; `cells` maps (gender, age) to share."""
    def make(ad_id="a1", page_id="p1", text="", start=date(2019, 5, 1), stop=None,
             lower=1000, upper=1999, cells=None, regions=(), **kwargs) -> AdRecord:
        demographics = tuple(DemographicCell(g, a, s) for (g, a), s in (cells or {}).items())
        return AdRecord(id=ad_id, page_id=page_id, text=text,
                        created=datetime.combine(start, datetime.min.time()),
                        delivery_start=start, delivery_stop=stop,
                        impressions=RangedValue(lower, upper),
                        demographic_distribution=demographics,
                        region_distribution=tuple(regions), **kwargs)
    return make


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("synthetic")
    synth.write_bundle(out, seed=0)
    return out


@pytest.fixture(scope="session")
def bundle_config(bundle_dir):
    return load_config(bundle_dir / "adlens.yaml")


@pytest.fixture(scope="session")
def bundle_inputs(bundle_config):
    """(raw, keyword-filtered and period-filtered) datasets of the synthetic bundle."""
    return load_inputs(bundle_config)


@pytest.fixture(scope="session")
def truth(bundle_dir) -> pd.DataFrame:
    return pd.read_csv(bundle_dir / "truth.csv", dtype={"ad_id": str, "stance": str, "targeting": str})
