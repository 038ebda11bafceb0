"""Band random matrices with a disordered diagonal: local spectral density,
participation ratios and level statistics over disorder ensembles."""

__version__ = "0.1.0"

from .ensemble import BrmddMatrix, EnsembleParams, build_matrix, derived_params  # noqa: E402
from .spectral import SpectralDecomposition, SpectralError, diagonalize  # noqa: E402
from .theory import LawConstants, classify_regime  # noqa: E402

__all__ = [
    "BrmddMatrix",
    "EnsembleParams",
    "LawConstants",
    "SpectralDecomposition",
    "SpectralError",
    "build_matrix",
    "classify_regime",
    "derived_params",
    "diagonalize",
]
