"""Pseudo-spectral simulator for a damped two-dimensional primitive-equation model.

Submodules: ``spectral`` (bases, transforms, products), ``fields`` (state and
diagnostics), ``dynamics`` (tendencies), ``integrate`` (time stepping),
``energy`` and ``monitor`` (functionals and studies), ``config``,
``checkpoint`` and ``cli`` (driver).
"""

from .dynamics import SystemKind
from .fields import Params, State, initial_state
from .integrate import Scheme, StepperConfig, run

__all__ = ["Params", "Scheme", "State", "StepperConfig", "SystemKind", "initial_state", "run"]
__version__ = "0.1.0"
