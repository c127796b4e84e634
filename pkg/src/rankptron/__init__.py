"""Perceptron-style online learning to rank."""

__version__ = "0.1.0"
