"""Polarization and intensity fluctuations of a split-density VCSEL model.

Submodules:

``params``      physical and dimensionless parameters
``dynamics``    deterministic rate equations and RK4 integration
``linear``      linearized Langevin system, eigen-dyads, closed-form correlators
``stochastic``  linear and nonlinear Langevin simulation
``analysis``    correlator estimation, fits, parameter inversion, filters
``cli``         the ``vcsel-polar`` command
"""

__version__ = "0.1.0"

from .errors import VcselPolarError  # noqa: E402
from .params import LaserParams, derive, params_from_dimensionless, reference_params  # noqa: E402

__all__ = [
    "__version__",
    "VcselPolarError",
    "LaserParams",
    "derive",
    "params_from_dimensionless",
    "reference_params",
]
