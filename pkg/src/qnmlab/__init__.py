"""Quasinormal-mode laboratory for canonical open resonators."""

__version__ = "0.1.0"
