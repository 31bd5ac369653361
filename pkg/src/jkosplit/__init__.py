"""Variational splitting solver for a constrained aggregation-diffusion-reaction equation."""

__version__ = "0.1.0"
