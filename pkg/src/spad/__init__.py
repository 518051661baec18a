"""spad: attack and defense toolkit for desk-scale structured prediction models."""

__version__ = "0.1.0"
