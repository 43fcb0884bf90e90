"""Hybrid truck-and-drone last-mile delivery: planning, simulation, fleet links."""

__version__ = "0.1.0"
