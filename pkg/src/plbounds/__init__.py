"""Numerical bounds for polynomial-like restrictions: external rays, cuts,
raster regions, discrete extremal length and modulus certificates."""

from .angles import Angle, CombCut, CombCutCycle
from .certify import Certificate, PipelineConfig, renorm_certify_pipeline
from .cubic import CubicParams
from .errors import PLBoundsError, PreconditionError, StageFailure
from .extremal import ModulusEstimate, annulus_modulus
from .poly import Poly
from .regions import Grid, PLRestriction, Region

__version__ = "0.1.0"

__all__ = [
    "Angle", "CombCut", "CombCutCycle", "Certificate", "PipelineConfig",
    "renorm_certify_pipeline", "CubicParams", "PLBoundsError", "PreconditionError",
    "StageFailure", "ModulusEstimate", "annulus_modulus", "Poly", "Grid", "PLRestriction",
    "Region",
]
