"""Commonsense reasoning over collective vehicle behaviour for perception correction."""

__version__ = "0.1.0"
