"""Transformers on Fourier-domain image sequences: spectral super-resolution
and sparse-view CT reconstruction, with the full simulation/training/evaluation
harness around them."""

__version__ = "0.1.0"
