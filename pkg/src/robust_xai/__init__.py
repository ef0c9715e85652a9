"""Robustness of perturbation-based explanations against bias-hiding attacks."""

__version__ = "0.1.0"
SCHEMA_VERSION = "1"
