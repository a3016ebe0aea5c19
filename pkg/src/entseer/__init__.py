"""Entanglement classification and certification from random-basis correlators."""

__version__ = "0.1.0"
