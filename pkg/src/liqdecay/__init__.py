"""Decay analysis for the compressible nematic liquid-crystal flow near equilibrium."""

from .linear_symbol import FluidParams
from .spectral_field import Field, SpectralGrid, CutoffPair, make_grid
from .timeseries import TimeSeries

__version__ = "0.1.0"

__all__ = ["FluidParams", "Field", "SpectralGrid", "CutoffPair", "make_grid", "TimeSeries"]
