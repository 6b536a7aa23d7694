"""Mobility-aware prediction and behavior-based scheduling for air-ground unmanned fleets."""

__version__ = "0.1.0"
