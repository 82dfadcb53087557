"""Numerical thermodynamic formalism for piecewise-expanding Markov maps of the interval."""

__version__ = "0.1.0"

from .dynamics import Branch, HypothesisReport, MarkovMap1D, verify_hypotheses  # noqa: E402
from .potential import Potential  # noqa: E402
from .transfer import SpectralData, leading_spectrum, spectrum, transfer_matrix  # noqa: E402
from .equilibrium import EquilibriumState, equilibrium_measure  # noqa: E402

__all__ = [
    "Branch", "EquilibriumState", "HypothesisReport", "MarkovMap1D", "Potential", "SpectralData",
    "equilibrium_measure", "leading_spectrum", "spectrum", "transfer_matrix", "verify_hypotheses",
]
