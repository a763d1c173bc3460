"""whistlerlab: numerical laboratory for whistler-wave dispersion in electron MHD."""

__version__ = "0.1.0"
