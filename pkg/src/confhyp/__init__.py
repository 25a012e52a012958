"""Conformal hypersurface invariants from metric jets."""

__version__ = "0.1.0"
