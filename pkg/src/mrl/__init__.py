"""Markovian rough paths, explicit Malliavin derivatives and Monte Carlo non-degeneracy estimators."""

from ._accel import backend
from .io import VERSION as __version__

__all__ = ["__version__", "backend"]
