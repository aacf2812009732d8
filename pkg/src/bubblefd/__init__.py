"""Finite-difference forward prices for strict-local-martingale (bubble) underlyings."""

__version__ = "0.1.0"
