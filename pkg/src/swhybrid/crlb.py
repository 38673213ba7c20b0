"""Stochastic Cramer-Rao bounds for DOA estimation on a switched hybrid array.

The single-source bound factors into an angle/SNR term and a purely
geometric term ``K * sum(p^2) - (sum p)^2`` over the selected antenna
indices, which is what antenna selection maximizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import NumericalError, check_angle, check_positive_int
from .array import (ArrayGeometry, SelectionVector, SourceEnsemble, steering_matrix,
                    steering_vector, true_covariance)

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class CrlbResult:
    """CRLB matrix over the source angles, in radians squared."""

    matrix: np.ndarray

    @property
    def per_source(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


def steering_derivative(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """``d a / d theta = j (2 pi d0 / lambda) cos(theta) D a(theta)``."""
    theta = check_angle(theta)
    k = 2 * np.pi * geometry.d0 / geometry.wavelength
    return 1j * k * np.cos(theta) * geometry.positions * steering_vector(geometry, theta)


def _guarded_inv(m: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(f"{what} is ill-conditioned (cond={cond:.3g})")
    return np.linalg.inv(m)


def crlb_general(geometry: ArrayGeometry, sources: SourceEnsemble, T: int) -> CrlbResult:
    """Stochastic CRB for ``Q`` uncorrelated sources seen by ``geometry``.

    ``(sigma_v^2 / 2T) * inv(Re[(Ad^H P_perp Ad) * (R_s A^H R^-1 A R_s)^T])``

    The transpose on the second Hadamard factor matters once ``Q >= 2``; it is
    what the Fisher information of a Gaussian model with unknown Hermitian
    source covariance gives.
    """
    check_positive_int(T, "T")
    q = sources.n_sources
    if q >= geometry.size:
        raise ValueError(f"Q={q} sources are not identifiable with K={geometry.size} elements")
    if sources.noise_power <= 0:
        raise NumericalError("the bound needs a positive noise power")
    a = steering_matrix(geometry, sources.angles)
    ad = np.column_stack([steering_derivative(geometry, t) for t in sources.angles])
    r = true_covariance(geometry, sources)
    aha_inv = _guarded_inv(a.conj().T @ a, "A^H A")
    r_inv = _guarded_inv(r, "R")
    proj = np.eye(geometry.size) - a @ aha_inv @ a.conj().T
    rs = sources.source_covariance
    left = ad.conj().T @ proj @ ad
    right = rs @ a.conj().T @ r_inv @ a @ rs
    info = np.real(left * right.T)
    bound = sources.noise_power / (2 * T) * _guarded_inv(info, "information matrix")
    return CrlbResult((bound + bound.T) / 2)


def selection_objective(selection: SelectionVector | ArrayGeometry) -> float:
    """``K * sum(p^2) - (sum p)^2`` over the selected indices (larger is better)."""
    if isinstance(selection, SelectionVector):
        p = np.asarray(selection.indices, dtype=float)
    elif isinstance(selection, ArrayGeometry):
        p = selection.positions
    else:
        p = np.asarray(selection, dtype=float)
    return float(p.size * np.dot(p, p) - p.sum() ** 2)


def single_source_beta(theta: float, snr: float, k: int, d0_over_lambda: float = 0.5) -> float:
    """Angle/SNR factor of the single-source Fisher information.

    ``8 pi^2 (d0/lambda)^2 snr^2 cos^2(theta) / (1 + K snr)``. The wavelength
    enters squared; with ``d0 = lambda/2`` this is
    ``2 pi^2 snr^2 cos^2(theta) / (1 + K snr)``.
    """
    return (8 * np.pi ** 2 * d0_over_lambda ** 2 * snr ** 2 * np.cos(theta) ** 2
            / (1 + k * snr))


def crlb_single_source(selection: SelectionVector | ArrayGeometry, theta: float,
                       snr: float, T: int) -> float:
    """Closed-form single-source CRLB in radians squared.

    Args:
        selection: Switch configuration, or the compressed geometry itself.
        theta: Source angle in radians.
        snr: Linear SNR ``sigma_s^2 / sigma_v^2``.
        T: Snapshot count.
    """
    theta = check_angle(theta)
    check_positive_int(T, "T")
    k = selection.k if isinstance(selection, SelectionVector) else selection.size
    if k < 2:
        raise ValueError("the single-source bound needs at least two selected antennas")
    if snr <= 0:
        raise ValueError("SNR must be positive")
    spread = selection_objective(selection)
    return 1.0 / (T * single_source_beta(theta, snr, k) * spread)
