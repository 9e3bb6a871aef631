"""Semi-supervised amortized Bayesian inference with self-consistency losses."""
__version__ = "0.1.0"
