"""Adversarial transfer learning for compound bioactivity prediction."""

__version__ = "0.1.0"
