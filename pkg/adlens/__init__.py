"""Political ad archive analytics: ingest, stance classification, audience and agenda analysis."""
from .__version__ import VERSION

__all__ = ["VERSION"]
