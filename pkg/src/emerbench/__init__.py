"""Benchmark engine for EEG-based multimodal emotion recognition."""

__version__ = "0.1.0"
