"""Hybrid convolution / window-attention backbone with global coordinator tokens, on a numpy autodiff core."""

__version__ = "0.1.0"
