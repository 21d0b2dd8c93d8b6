"""Monitored free-fermion circuits: Gaussian evolution, Majorana-string sampling,
stabilizer Renyi entropy estimation."""

from ._ffmagic import *  # noqa: F401,F403
from ._ffmagic import __version__  # noqa: F401
