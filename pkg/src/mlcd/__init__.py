"""Machine-learned cubical decompositions of multistable flows."""

__version__ = "0.1.0"
