"""Keyphrase-conditioned story-ending generation with diversity-promoting losses."""

__version__ = "0.1.0"
