"""Multi-score regression discontinuity toolkit."""

__version__ = "0.1.0"
