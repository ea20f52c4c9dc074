"""Multifractal toolkit: prescribed-spectrum measures, scaling functions,
wavelet-leader analysis, and explicit saturation fields."""

__version__ = "0.1.0"
