"""Exact transseries algebra, formal ODE solutions, numeric Borel-Laplace
summation with Stokes constants, and a multisummation laboratory."""
from . import multiseries, transseries, formal_ode, borel, multisum  # noqa: F401

__version__ = "0.1.0"
