"""deckgen: turn a slide reference image into executable slide-construction code."""

__version__ = "0.1.0"
