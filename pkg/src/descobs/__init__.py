"""Distributed Luenberger observers for descriptor linear systems."""

__version__ = "0.1.0"
