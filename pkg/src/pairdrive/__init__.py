"""Exact steady states of Kerr lattices with two-photon drive and loss."""

__version__ = "0.1.0"

from .model import ModelSpec, PairingSpectrum, build_pairing_matrix, load_config, spectrum_of, takagi
from .moments import ObservableSet, ResonanceError, correlators, mode_moments, pcs_residual

__all__ = [
    "__version__",
    "ModelSpec",
    "PairingSpectrum",
    "build_pairing_matrix",
    "load_config",
    "spectrum_of",
    "takagi",
    "ObservableSet",
    "ResonanceError",
    "correlators",
    "mode_moments",
    "pcs_residual",
]
