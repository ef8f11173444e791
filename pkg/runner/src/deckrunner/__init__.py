"""deckrunner: sandboxed execution and inspection of slide-construction programs."""

__version__ = "0.1.0"

EMU_PER_INCH = 914400
EMU_PER_POINT = 12700
