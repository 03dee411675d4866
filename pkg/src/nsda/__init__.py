"""Pseudo-spectral 2D Navier-Stokes with spectrally filtered discrete-in-time data assimilation."""

__version__ = "0.1.0"
