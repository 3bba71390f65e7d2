"""Backscatter statistics of elastic waves in 2D random media."""

from .medium_green import ElasticMedium, green, green_truncated
from .randfield import FieldSpec, GridD, sample_potential
from .specfun import hankel1, hankel1_truncated

__all__ = [
    "ElasticMedium",
    "FieldSpec",
    "GridD",
    "green",
    "green_truncated",
    "hankel1",
    "hankel1_truncated",
    "sample_potential",
]
__version__ = "0.1.0"
