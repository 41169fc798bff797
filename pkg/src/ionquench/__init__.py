"""Ramsey visibility of ion Coulomb crystals after a spin-dependent structural quench."""

__version__ = "0.1.0"
