"""Clinical time-series benchmark construction, baselines and evaluation."""

__version__ = "0.1.0"
