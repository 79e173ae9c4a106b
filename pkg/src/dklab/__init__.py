"""Simulation lab for mean-field interacting diffusions on the unit torus and
their conservative-SPDE (regularized Dean-Kawasaki) approximation.

Subpackage layout mirrors the pipeline: periodic spectral machinery
(``torus``), interaction coefficients (``coefficients``), square-root taming
and colored-noise spectra (``regularization``), noise sampling (``noise``),
the particle and SPDE integrators (``particles``, ``spde``, ``mean_field``),
cylindrical test functionals (``functionals``) and campaign orchestration
(``experiment``, ``cli``).
"""

__version__ = "0.1.0"

from .torus import TorusGrid, GridField
from .coefficients import CoefficientSet
from .regularization import TamedSqrt, NoiseSpectrum, ScalingSchedule

__all__ = [
    "TorusGrid",
    "GridField",
    "CoefficientSet",
    "TamedSqrt",
    "NoiseSpectrum",
    "ScalingSchedule",
    "__version__",
]
