"""Capacity bounds and achievable rates for phase-noise channels fed by an
electro-optic frequency comb."""

__version__ = "0.1.0"
