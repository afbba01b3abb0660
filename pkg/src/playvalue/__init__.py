"""Continuous-time valuation of football plays from player tracking data."""

__version__ = "0.1.0"
