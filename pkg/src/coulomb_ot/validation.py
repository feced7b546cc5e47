"""Input validation helpers shared by the functional API and the estimators."""

import math
import numbers

import numpy as np

from .exceptions import CapExceededError, InvalidInputError

#: Upper bound on the number of cells of any dense product field.
DEFAULT_FIELD_CAP = 1 << 25


def check_positive(name, value, *, strict=True):
    if not isinstance(value, numbers.Real) or math.isnan(value):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}")
    if strict and not value > 0:
        raise InvalidInputError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise InvalidInputError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_option(name, value, options):
    if value not in options:
        raise InvalidInputError(f"{name} must be one of {sorted(options)}, got {value!r}")
    return value


def check_arity(N, allowed=(2, 3)):
    if not isinstance(N, numbers.Integral) or N not in allowed:
        raise InvalidInputError(f"arity N must be one of {allowed}, got {N!r}")
    return int(N)


def check_cells(n_cells, cap=DEFAULT_FIELD_CAP, what="field"):
    if n_cells > cap:
        raise CapExceededError(f"{what} with {n_cells} cells exceeds cap {cap}")
    return n_cells


def check_density(rho):
    """Return ``rho`` if it is a :class:`DiscreteDensity`, else raise."""
    from .grid import DiscreteDensity

    if not isinstance(rho, DiscreteDensity):
        raise InvalidInputError(f"expected a DiscreteDensity, got {type(rho).__name__}")
    return rho


def check_plan(plan, arity=None, *, nonnegative=True):
    from .grid import ProductField

    if not isinstance(plan, ProductField):
        raise InvalidInputError(f"expected a ProductField, got {type(plan).__name__}")
    if arity is not None and plan.arity != arity:
        raise InvalidInputError(f"expected arity {arity}, got {plan.arity}")
    if nonnegative and np.iscomplexobj(plan.values):
        raise InvalidInputError("plan values must be real")
    if nonnegative and plan.values.size and plan.values.min() < 0:
        raise InvalidInputError("plan values must be nonnegative")
    return plan
