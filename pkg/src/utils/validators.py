"""Input validation utilities for trunc-ellipse."""

import math
import re
from typing import Tuple

import numpy as np

from src.core.errors import ValidationError

__all__ = [
    "ValidationError",
    "validate_profile_name",
    "validate_rho",
    "validate_positive",
    "validate_dimensions",
    "validate_symmetric",
    "validate_seed",
    "validate_sample_size",
    "validate_probability",
]


def validate_profile_name(name: str) -> Tuple[bool, str]:
    """
    Validate a profile name.

    Args:
        name: Profile name to validate

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not name:
        return False, "Profile name cannot be empty"

    if len(name) > 50:
        return False, "Profile name too long (max 50 characters)"

    # Disallow filesystem-unsafe characters
    if re.search(r'[<>:"/\\|?*]', name):
        return False, "Profile name contains invalid characters"

    return True, ""


def validate_rho(rho: float) -> Tuple[bool, str]:
    """
    Validate a correlation coefficient.

    Args:
        rho: Correlation, must lie strictly inside (-1, 1)

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not math.isfinite(rho):
        return False, "rho must be finite"

    if abs(rho) >= 1.0:
        return False, f"|rho| must be < 1 (got {rho})"

    return True, ""


def validate_positive(value: float, name: str) -> Tuple[bool, str]:
    """Check that a parameter is finite and strictly positive."""
    if not math.isfinite(value) or value <= 0:
        return False, f"{name} must be a finite positive number (got {value})"
    return True, ""


def validate_dimensions(mu: np.ndarray, sigma: np.ndarray, c: np.ndarray) -> Tuple[bool, str]:
    """
    Validate that mean, covariance and truncation point agree in dimension.

    Args:
        mu: mean vector
        sigma: covariance matrix
        c: truncation point

    Returns:
        Tuple of (is_valid, error_message)
    """
    if mu.ndim != 1 or mu.size == 0:
        return False, "mu must be a non-empty vector"

    p = mu.size
    if sigma.shape != (p, p):
        return False, f"sigma has shape {sigma.shape}, expected ({p}, {p})"

    if c.shape != (p,):
        return False, f"c has length {c.size}, expected {p}"

    if not np.all(np.isfinite(mu)):
        return False, "mu must be finite"

    if not np.all(np.isfinite(sigma)):
        return False, "sigma must be finite"

    # -inf marks an untruncated coordinate; nan and +inf are meaningless
    if np.any(np.isnan(c)) or np.any(c == np.inf):
        return False, "c entries must be finite or -inf"

    return True, ""


def validate_symmetric(sigma: np.ndarray, rtol: float = 1e-12) -> Tuple[bool, str]:
    """Check symmetry of a square matrix within a relative tolerance."""
    scale = max(float(np.max(np.abs(sigma))), 1e-300)
    asym = float(np.max(np.abs(sigma - sigma.T)))
    if asym > rtol * scale:
        return False, f"sigma is not symmetric (max asymmetry {asym:.3g})"
    return True, ""


def validate_seed(seed: int) -> Tuple[bool, str]:
    """Seeds are non-negative integers below 2**64."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        return False, "seed must be an integer"

    if seed < 0 or seed >= 2 ** 64:
        return False, "seed must be in [0, 2**64)"

    return True, ""


def validate_sample_size(n: int, minimum: int = 1) -> Tuple[bool, str]:
    """Check a requested sample size."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        return False, "sample size must be an integer"

    if n < minimum:
        return False, f"sample size must be >= {minimum} (got {n})"

    return True, ""


def validate_probability(alpha: float) -> Tuple[bool, str]:
    """Check a significance level in (0, 1)."""
    if not (0.0 < alpha < 1.0):
        return False, f"probability must be in (0, 1) (got {alpha})"
    return True, ""


def require(check: Tuple[bool, str], error_cls=ValidationError) -> None:
    """
    Raise error_cls when a validator result is negative.

    Args:
        check: (is_valid, message) returned by a validator
        error_cls: exception type to raise
    """
    is_valid, msg = check
    if not is_valid:
        raise error_cls(msg)

