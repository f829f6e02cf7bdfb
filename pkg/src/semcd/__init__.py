"""Sequential Monte Carlo bucketing of depth values."""

__version__ = "0.1.0"
