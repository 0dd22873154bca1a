"""Separation-of-motion procedures on a solvable fast/slow oscillator model."""

__version__ = "0.1.0"

from .errors import InputError, NumericalError, SepmotionError
from .model import ModelSpec
from .numerics import Grid1D, Grid2D, Spectrum, WaveField

__all__ = ["Grid1D", "Grid2D", "InputError", "ModelSpec", "NumericalError", "SepmotionError",
           "Spectrum", "WaveField", "__version__"]
