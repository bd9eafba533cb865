"""Vanishing-viscosity transport control: geometry, spectra, bounds and costs."""

from .errors import VTError
from .problem import (
    AssumptionReport,
    Potential,
    VectorField,
    load_field,
    make_example_field,
    potential,
    validate_assumptions,
)

__version__ = "0.1.0"

__all__ = [
    "VTError",
    "AssumptionReport",
    "Potential",
    "VectorField",
    "load_field",
    "make_example_field",
    "potential",
    "validate_assumptions",
    "__version__",
]
