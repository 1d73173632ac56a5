"""Small parameter validators used by configs and the estimator."""

import math
import numbers

from .exceptions import ConfigError


def check_unit_interval(value, name):
    """Return ``value`` as float, requiring 0 <= value <= 1."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_factor(value, name):
    """Over-estimation factors are finite reals >= 1."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value < 1.0:
        raise ConfigError(f"{name} must be a finite number >= 1, got {value}")
    return value


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_real(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    return value


def check_choice(value, name, choices):
    """Case-insensitive membership check; returns the canonical spelling."""
    if isinstance(value, str):
        for choice in choices:
            if value.lower() == choice.lower():
                return choice
    raise ConfigError(f"{name} must be one of {', '.join(choices)}; got {value!r}")
