"""Numerical toolkit for multivalued stochastic variational inequalities.

Modules: ``monotone`` (subdifferential operators), ``paths`` (grid paths and
metrics), ``dvi`` (deterministic inequalities and skeletons), ``svi``
(Brownian drivers, Wong-Zakai solver, validation), ``experiments``
(Monte Carlo studies) and ``cli``.
"""

from . import coefficients, dvi, experiments, monotone, paths, svi
from .errors import InputError, NumericalError, SviLabError, UnsupportedError

__version__ = "0.1.0"

__all__ = [
    "coefficients", "dvi", "experiments", "monotone", "paths", "svi",
    "InputError", "NumericalError", "SviLabError", "UnsupportedError",
]
