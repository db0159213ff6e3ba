"""Seeded conditional diffusion for dyadic co-speech gesture generation."""

__version__ = "0.1.0"
