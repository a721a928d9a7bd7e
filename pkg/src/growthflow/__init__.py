"""Global optimization by growth-transform dynamics on a conservation manifold."""

__version__ = "0.1.0"
