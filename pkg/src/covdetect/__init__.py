"""Covariance-based joint activity and data detection for massive random access."""
__version__ = "0.1.0"
