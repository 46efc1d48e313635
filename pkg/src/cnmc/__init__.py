"""Constant nonlocal mean curvature for periodic arrays of near-spheres."""
from ._version import __version__, version_string
from .specfun import FracParams

__all__ = ["__version__", "version_string", "FracParams"]
