"""Lifelong multi-agent path finding with cache grids."""

__version__ = "0.1.0"
