"""Learning interaction constraints from Nash-equilibrium demonstrations."""

__version__ = "0.1.0"
