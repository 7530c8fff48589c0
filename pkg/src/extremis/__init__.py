"""Extreme-value analysis toolkit: univariate and multivariate tail modelling."""

__version__ = "0.1.0"

from . import (condex, core, mgpd, mvnt, simulate, taildep, univariate,
               validate)  # noqa: F401
from .core import Dataset, MarginSpec, derive_rng, transform_margin  # noqa: F401
