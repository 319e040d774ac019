"""Lattice toolkit for Yang-Mills-Higgs pairs on flat tori."""

__version__ = "0.1.0"

from .grid import TorusGrid  # noqa: E402
from .fields import DeformationPair, EndForm, HitchinPairState  # noqa: E402

__all__ = ["TorusGrid", "EndForm", "HitchinPairState", "DeformationPair", "__version__"]
