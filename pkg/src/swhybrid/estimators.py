"""Covariance-based DOA estimators and the ASN-DNN alternating loop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import NumericalError, check_square
from .array import (ArrayGeometry, SelectionVector, SourceEnsemble, compress_geometry,
                    sample_covariance, synthesize_snapshots)
from .neural import normalized_features

LOADING_COND = 1e10


def _loaded_inverse(r: np.ndarray) -> np.ndarray:
    """Inverse with diagonal loading ``1e-6 trace(R)/K`` for near-singular input."""
    r = check_square(r, "covariance").astype(complex)
    k = r.shape[0]
    if np.linalg.cond(r) > LOADING_COND:
        r = r + 1e-6 * np.real(np.trace(r)) / k * np.eye(k)
        if not np.isfinite(np.linalg.cond(r)) or np.linalg.cond(r) > LOADING_COND * 1e2:
            raise NumericalError("covariance is singular even after diagonal loading")
    return np.linalg.inv(r)


def mvdr_spectrum(r, geometry: ArrayGeometry, grid_rad) -> np.ndarray:
    """``P(theta) = 1 / (a^H R^-1 a)`` over ``grid_rad``."""
    grid = np.atleast_1d(np.asarray(grid_rad, dtype=float))
    r_inv = _loaded_inverse(r)
    a = np.exp(1j * np.pi * np.outer(geometry.positions, np.sin(grid)))
    denom = np.real(np.einsum("ig,ij,jg->g", a.conj(), r_inv, a))
    return 1.0 / denom


def mvdr_estimate(r, geometry: ArrayGeometry, grid_rad) -> float:
    """Angle (radians) of the spectrum peak; ties go to the first grid point."""
    grid = np.atleast_1d(np.asarray(grid_rad, dtype=float))
    power = mvdr_spectrum(r, geometry, grid)
    return float(grid[np.argmax(power)])


def root_music(r, geometry: ArrayGeometry, n_sources: int) -> np.ndarray:
    """Root-MUSIC on a contiguous ULA. Returns sorted angles in radians.

    The noise-subspace polynomial has conjugate-reciprocal roots; the
    ``n_sources`` roots inside the unit circle closest to it give the DOAs.
    """
    r = check_square(r, "covariance")
    k = r.shape[0]
    if not geometry.is_contiguous() or geometry.size != k:
        raise ValueError("root-MUSIC needs a contiguous ULA matching the covariance")
    if not 1 <= n_sources < k:
        raise ValueError(f"need 1 <= Q < K, got Q={n_sources}, K={k}")
    _, vecs = np.linalg.eigh((r + r.conj().T) / 2)
    en = vecs[:, : k - n_sources]
    c = en @ en.conj().T
    # coefficient of z^(K-1-l) is the sum of the l-th diagonal of C
    coeffs = np.array([np.trace(c, offset=l) for l in range(k - 1, -k, -1)])
    roots = np.roots(coeffs)
    inside = roots[np.abs(roots) < 1]
    closest = inside[np.argsort(np.abs(np.abs(inside) - 1), kind="stable")[:n_sources]]
    sin_theta = np.clip(np.angle(closest) / np.pi, -1, 1)
    return np.sort(np.arcsin(sin_theta))


@dataclass
class AsnDnnResult:
    theta: float
    history: list[float]
    selections: list[SelectionVector]
    converged: bool

    @property
    def n_iter(self) -> int:
        return len(self.history) - 1


def asn_dnn_estimate(asn, dnn, full: ArrayGeometry, sources: SourceEnsemble, T: int,
                     rho0: SelectionVector, eps: float = np.deg2rad(0.5), max_iter: int = 10,
                     seed=None, mvdr_grid=None,
                     angle_range=(np.deg2rad(-60), np.deg2rad(60))) -> AsnDnnResult:
    """Alternate antenna selection and DNN estimation until the angle settles.

    A coarse MVDR estimate on ``rho0`` seeds the loop. Each iteration asks the
    ASN for a configuration at the previous estimate, measures ``T`` fresh
    snapshots on it and regresses a new angle with the DNN. The loop stops
    once consecutive estimates differ by at most ``eps`` or after
    ``max_iter`` iterations and returns the mean of the last two estimates.

    Args:
        asn: Fitted :class:`~swhybrid.neural.AntennaSelectionNetwork`.
        dnn: Fitted :class:`~swhybrid.neural.DoaRegressor` (degrees).
        full: The full M-element ULA.
        sources: Scene to measure; only used to draw snapshots.
        T: Snapshots per measurement.
        rho0: Configuration for the MVDR initialization.
        eps: Convergence threshold in radians.
        mvdr_grid: MVDR scan grid in radians, 0.1 degree over ``angle_range``
            by default.
        angle_range: Estimates are clamped to this interval.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    streams = ss.spawn(max_iter + 1)
    lo, hi = angle_range
    if mvdr_grid is None:
        mvdr_grid = np.deg2rad(np.arange(np.rad2deg(lo), np.rad2deg(hi) + 1e-9, 0.1))

    def measure(sel, stream):
        geom = compress_geometry(full, sel)
        return geom, sample_covariance(synthesize_snapshots(geom, sources, T, stream))

    geom0, r0 = measure(rho0, streams[0])
    history = [float(np.clip(mvdr_estimate(r0, geom0, mvdr_grid), lo, hi))]
    selections = [rho0]
    converged = False
    for j in range(1, max_iter + 1):
        sel = asn.select(history[-1])
        _, r = measure(sel, streams[j])
        est = np.deg2rad(dnn.predict(normalized_features(r)[None, :])[0])
        history.append(float(np.clip(est, lo, hi)))
        selections.append(sel)
        if abs(history[-1] - history[-2]) <= eps:
            converged = True
            break
    theta = (history[-1] + history[-2]) / 2
    return AsnDnnResult(theta, history, selections, converged)


class MvdrEstimator(BaseEstimator):
    """Single-source MVDR peak search on a fixed geometry (degrees in/out)."""

    def __init__(self, indices=tuple(range(1, 9)), grid_start=-60.0, grid_stop=60.0,
                 grid_step=0.1):
        self.indices = indices
        self.grid_start = grid_start
        self.grid_stop = grid_stop
        self.grid_step = grid_step

    def fit(self, x=None, y=None):
        self.geometry_ = ArrayGeometry(tuple(self.indices))
        n = int(round((self.grid_stop - self.grid_start) / self.grid_step))
        self.grid_ = np.deg2rad(self.grid_start + self.grid_step * np.arange(n + 1))
        return self

    def predict(self, covariances) -> np.ndarray:
        return np.array([np.rad2deg(mvdr_estimate(r, self.geometry_, self.grid_))
                         for r in covariances])


class RootMusicEstimator(BaseEstimator):
    """Root-MUSIC on a contiguous ULA; ``predict`` maps covariances to degrees."""

    def __init__(self, n_elements=8, n_sources=1):
        self.n_elements = n_elements
        self.n_sources = n_sources

    def fit(self, x=None, y=None):
        self.geometry_ = ArrayGeometry.ula(self.n_elements)
        return self

    def predict(self, covariances) -> np.ndarray:
        out = np.array([np.rad2deg(root_music(r, self.geometry_, self.n_sources))
                        for r in covariances])
        return out[:, 0] if self.n_sources == 1 else out
