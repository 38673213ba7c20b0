"""On-grid sparse DOA recovery from the co-array virtual signal.

The virtual signal ``r = A_D r_s + noise`` is fit with a LASSO

    min_x  alpha * ||x||_1 + 1/2 * ||r - A x||_2^2

solved by ADMM with a cached Cholesky factor. ``x`` models source powers, so
it is kept real; for a dictionary whose lags come in +/- pairs (every
co-array) ``A^H A`` and ``A^H r`` are real already and nothing is lost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from ._validation import NumericalError
from .array import SourceEnsemble
from .swsha import (AngleGrid, DictionaryMatrix, NestedSchedule, VirtualSignal,
                    build_dictionary, synthesize_augmented_covariance, vectorize_virtual)


@dataclass(frozen=True)
class AdmmConfig:
    """ADMM settings.

    ``zeta="auto"`` sets the penalty to the mean squared column norm of the
    dictionary, which keeps the iteration count stable across problem sizes.
    """

    alpha: float = 0.25
    zeta: float | str = "auto"
    max_iter: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.zeta != "auto" and not float(self.zeta) > 0:
            raise ValueError("zeta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class AdmmResult:
    spectrum: np.ndarray
    n_iter: int
    converged: bool
    objective: np.ndarray
    residual: float


def soft_threshold(x, kappa):
    """Elementwise shrinkage toward zero by ``kappa``."""
    if np.any(np.asarray(kappa) < 0):
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


def lasso_objective(a, r, x, alpha) -> float:
    return float(alpha * np.abs(x).sum() + 0.5 * np.linalg.norm(r - a @ x) ** 2)


def admm_lasso(dictionary, r, cfg: AdmmConfig | None = None) -> AdmmResult:
    """Run ADMM on the LASSO and return the sparse iterate ``z``.

    Args:
        dictionary: :class:`DictionaryMatrix` or a plain ``(N, Qbar)`` array.
        r: :class:`VirtualSignal` or a length-``N`` vector.

    Raises:
        NumericalError: when an iterate stops being finite.
    """
    cfg = cfg or AdmmConfig()
    a = dictionary.matrix if isinstance(dictionary, DictionaryMatrix) else np.asarray(dictionary)
    r = r.values if isinstance(r, VirtualSignal) else np.asarray(r)
    if a.ndim != 2 or a.shape[0] != r.size:
        raise ValueError(f"dictionary rows {a.shape} do not match signal length {r.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(r))):
        raise ValueError("dictionary and signal must be finite")
    n_cols = a.shape[1]
    gram = np.real(a.conj().T @ a)
    rhs0 = np.real(a.conj().T @ r)
    zeta = float(np.mean(np.diag(gram))) if cfg.zeta == "auto" else float(cfg.zeta)
    factor = scipy.linalg.cho_factor(gram + zeta * np.eye(n_cols))
    kappa = cfg.alpha / zeta

    z = np.zeros(n_cols)
    u = np.zeros(n_cols)
    objective = []
    converged = False
    for it in range(1, cfg.max_iter + 1):
        x = scipy.linalg.cho_solve(factor, rhs0 + zeta * (z - u), check_finite=False)
        z_old = z
        z = soft_threshold(x + u, kappa)
        u = u + x - z
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise NumericalError(f"ADMM iterate became non-finite at iteration {it}")
        objective.append(lasso_objective(a, r, z, cfg.alpha))
        # primal and dual residuals
        if np.linalg.norm(x - z) <= cfg.tol and zeta * np.linalg.norm(z - z_old) <= cfg.tol:
            converged = True
            break
    return AdmmResult(z, it, converged, np.asarray(objective),
                      float(np.linalg.norm(r - a @ z)))


def pick_peaks(spectrum, grid_deg, n_peaks: int) -> np.ndarray:
    """Grid angles of the ``n_peaks`` largest entries, sorted ascending.

    Negative entries are clipped to zero first; ties go to the smaller grid
    index.
    """
    s = np.clip(np.asarray(spectrum, dtype=float), 0.0, None)
    grid_deg = np.asarray(grid_deg, dtype=float)
    if s.size != grid_deg.size:
        raise ValueError("spectrum and grid lengths differ")
    if n_peaks > s.size:
        raise ValueError(f"asked for {n_peaks} peaks on a {s.size}-point grid")
    if not np.any(s > 0):
        raise ValueError("spectrum has no peaks: every entry is zero")
    order = np.argsort(-s, kind="stable")[:n_peaks]
    return np.sort(grid_deg[order])


def spectrum_csv(spectrum, grid_deg) -> str:
    """``angle_deg,magnitude`` CSV text."""
    lines = ["angle_deg,magnitude"]
    lines += [f"{g:.6g},{v:.12g}" for g, v in zip(grid_deg, spectrum)]
    return "\n".join(lines) + "\n"


class SparseDoaEstimator(BaseEstimator):
    """Co-array LASSO DOA estimator over an SW-SHA schedule.

    ``fit`` builds the dictionary for the schedule's augmented array;
    ``predict`` maps augmented covariances to the ``n_sources`` peak angles
    in degrees. The last spectrum is kept in ``spectrum_``.
    """

    def __init__(self, schedule: NestedSchedule | None = None, n_sources=1, alpha=0.25,
                 zeta="auto", max_iter=500, tol=1e-6, grid_start=-90.0, grid_stop=90.0,
                 grid_step=1.0):
        self.schedule = schedule
        self.n_sources = n_sources
        self.alpha = alpha
        self.zeta = zeta
        self.max_iter = max_iter
        self.tol = tol
        self.grid_start = grid_start
        self.grid_stop = grid_stop
        self.grid_step = grid_step

    def fit(self, x=None, y=None):
        if self.schedule is None:
            raise ValueError("a NestedSchedule is required")
        self.positions_ = np.asarray(self.schedule.augmented.indices)
        p = self.positions_
        lags = (p[:, None] - p[None, :]).ravel(order="F")
        self.grid_ = AngleGrid(self.grid_start, self.grid_stop, self.grid_step)
        self.dictionary_ = build_dictionary(lags, self.grid_)
        self.config_ = AdmmConfig(self.alpha, self.zeta, self.max_iter, self.tol)
        return self

    def spectrum(self, r) -> AdmmResult:
        vs = vectorize_virtual(r, self.positions_)
        return admm_lasso(self.dictionary_, vs, self.config_)

    def predict(self, covariances) -> np.ndarray:
        out = []
        for r in covariances:
            res = self.spectrum(r)
            self.spectrum_ = res.spectrum
            out.append(pick_peaks(res.spectrum, self.dictionary_.grid_deg, self.n_sources))
        return np.asarray(out)

    def simulate(self, sources: SourceEnsemble, T: int | None, seed=None) -> np.ndarray:
        """Augmented covariance for ``sources`` under this estimator's schedule."""
        return synthesize_augmented_covariance(self.schedule, sources, T, seed)
