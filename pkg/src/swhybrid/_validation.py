"""Small input-validation helpers shared across the package."""
from __future__ import annotations

import numbers

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(ArithmeticError):
    """A numerical routine produced non-finite values or lost conditioning."""


class InfeasibleError(ValueError):
    """No candidate satisfies the requested constraint."""


def check_angle(theta) -> float:
    theta = float(theta)
    if not -np.pi / 2 < theta < np.pi / 2:
        raise DomainError(f"angle {theta!r} rad is outside (-pi/2, pi/2)")
    return theta


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_random_state(seed) -> np.random.Generator:
    """Turn ``None``/int/SeedSequence/Generator into a ``Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_square(r, name: str = "matrix") -> np.ndarray:
    r = np.asarray(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"{name} must be square, got shape {r.shape}")
    return r


def check_covariance(r, rtol: float = 1e-10, eig_tol: float = -1e-8) -> np.ndarray:
    """Validate a Hermitian PSD matrix and return it as complex128."""
    r = check_square(r, "covariance").astype(complex)
    scale = max(np.abs(r).max(), 1.0)
    if np.abs(r - r.conj().T).max() > rtol * scale:
        raise ValueError("covariance is not Hermitian")
    if np.linalg.eigvalsh((r + r.conj().T) / 2).min() < eig_tol * scale:
        raise ValueError("covariance is not positive semidefinite")
    return r
