"""Spectral-Galerkin simulation and verification harness for the stochastic
Landau-Lifshitz-Bloch equation driven by pure-jump noise in Marcus form."""

__version__ = "0.1.0"
