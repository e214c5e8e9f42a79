"""Gradient-aware masked photometric losses for self-supervised depth, on
synthetic scenes with exact ground truth."""

__version__ = "0.1.0"
