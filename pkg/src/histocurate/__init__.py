"""Slide curation, balanced sampling, and reference-case search."""

__version__ = "0.1.0"
