"""Reference implementations that emit golden fixtures for the detection pipeline."""

__version__ = "0.1.0"
