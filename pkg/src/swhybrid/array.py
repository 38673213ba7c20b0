"""Physical array model for a switches-based hybrid receiver.

Antennas sit on a half-wavelength grid and are indexed from 1, so antenna
``m`` is located at ``m * d0``. A switch network connects each of the ``K``
RF chains to exactly one of the ``M`` antennas; a connection pattern is
carried as a binary selection vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_angle, check_positive_int, check_random_state


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna positions on a half-wavelength ULA grid.

    Args:
        indices: Strictly increasing 1-based antenna indices.
        wavelength: Carrier wavelength in meters. Only ratios with ``d0`` enter
            the array response, so the default of 1 is fine for most uses.
    """

    indices: tuple[int, ...]
    wavelength: float = 1.0

    def __post_init__(self):
        idx = tuple(int(i) for i in np.asarray(self.indices).ravel())
        if len(idx) == 0:
            raise ValueError("geometry needs at least one antenna")
        if idx[0] < 1:
            raise ValueError(f"antenna indices are 1-based, got {idx[0]}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("antenna indices must be strictly increasing")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def ula(cls, m: int, wavelength: float = 1.0) -> "ArrayGeometry":
        """Contiguous ULA ``{1, ..., m}``."""
        check_positive_int(m, "m")
        return cls(tuple(range(1, m + 1)), wavelength)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def d0(self) -> float:
        return self.wavelength / 2

    @property
    def positions(self) -> np.ndarray:
        """Element positions as a float array of grid indices."""
        return np.asarray(self.indices, dtype=float)

    def is_contiguous(self) -> bool:
        return self.indices[-1] - self.indices[0] == self.size - 1


@dataclass(frozen=True)
class SelectionVector:
    """Binary switch configuration ``rho`` with exactly ``K`` ones."""

    rho: tuple[int, ...]

    def __post_init__(self):
        rho = np.asarray(self.rho).ravel()
        if rho.size == 0:
            raise ValueError("selection vector is empty")
        if not np.all((rho == 0) | (rho == 1)):
            raise ValueError("selection vector must be binary")
        object.__setattr__(self, "rho", tuple(int(v) for v in rho))

    @classmethod
    def from_indices(cls, indices, m: int) -> "SelectionVector":
        """Build from 1-based selected antenna indices out of ``m``."""
        rho = np.zeros(m, dtype=int)
        idx = np.asarray(list(indices), dtype=int)
        if idx.size and (idx.min() < 1 or idx.max() > m):
            raise ValueError(f"selected indices must lie in 1..{m}")
        if np.unique(idx).size != idx.size:
            raise ValueError("selected indices contain duplicates")
        rho[idx - 1] = 1
        return cls(tuple(rho))

    @classmethod
    def from_matrix(cls, w: np.ndarray) -> "SelectionVector":
        """Collapse an ``M x K`` selection matrix, ``rho = sum_k w_k``."""
        w = np.asarray(w)
        if w.ndim != 2 or not np.allclose(np.abs(w).sum(axis=0), 1):
            raise ValueError("each selection matrix column must have unit l1 norm")
        rho = np.rint(np.abs(w).sum(axis=1)).astype(int)
        return cls(tuple(rho))

    @property
    def m(self) -> int:
        return len(self.rho)

    @property
    def k(self) -> int:
        return int(sum(self.rho))

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i + 1 for i, v in enumerate(self.rho) if v)

    def matrix(self) -> np.ndarray:
        """Equivalent ``M x K`` selection matrix ``W`` (columns ordered by antenna)."""
        w = np.zeros((self.m, self.k))
        for col, i in enumerate(self.indices):
            w[i - 1, col] = 1.0
        return w


@dataclass(frozen=True)
class SourceEnsemble:
    """Far-field narrowband sources.

    Args:
        angles: DOAs in radians, each in the open interval (-pi/2, pi/2).
        powers: Per-source powers; a scalar is broadcast to every source.
        noise_power: White noise power per antenna.
    """

    angles: tuple[float, ...]
    powers: tuple[float, ...] | float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles))
        if not angles:
            raise ValueError("need at least one source")
        for a in angles:
            check_angle(a)
        if len(set(angles)) != len(angles):
            raise ValueError("source angles must be pairwise distinct")
        powers = np.broadcast_to(np.asarray(self.powers, dtype=float), (len(angles),))
        if np.any(powers < 0):
            raise ValueError("source powers must be nonnegative")
        if self.noise_power < 0:
            raise ValueError("noise power must be nonnegative")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "powers", tuple(float(p) for p in powers))
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @classmethod
    def from_snr(cls, angles, snr_db: float, noise_power: float = 1.0) -> "SourceEnsemble":
        """Equal-power sources at ``snr_db`` relative to ``noise_power``."""
        power = noise_power * 10 ** (snr_db / 10)
        return cls(tuple(np.atleast_1d(angles)), power, noise_power)

    @property
    def n_sources(self) -> int:
        return len(self.angles)

    @property
    def source_covariance(self) -> np.ndarray:
        return np.diag(self.powers)


def steering_vector(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """Array response ``exp(j 2pi/lambda p_i d0 sin(theta))`` for one angle."""
    check_angle(theta)
    k = 2 * np.pi / geometry.wavelength * geometry.d0
    return np.exp(1j * k * geometry.positions * np.sin(theta))


def steering_matrix(geometry: ArrayGeometry, thetas) -> np.ndarray:
    """Stack steering vectors column-wise, shape ``(size, len(thetas))``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    for t in thetas:
        check_angle(t)
    k = 2 * np.pi / geometry.wavelength * geometry.d0
    return np.exp(1j * k * np.outer(geometry.positions, np.sin(thetas)))


def compress_geometry(full: ArrayGeometry, sel: SelectionVector) -> ArrayGeometry:
    """Keep the antennas of ``full`` that ``sel`` switches in."""
    if sel.m != full.size:
        raise ValueError(f"selection length {sel.m} does not match array size {full.size}")
    if sel.k == 0:
        raise ValueError("empty selection: no RF chain is connected")
    kept = tuple(p for p, r in zip(full.indices, sel.rho) if r)
    return ArrayGeometry(kept, full.wavelength)


def hermitian_part(r: np.ndarray) -> np.ndarray:
    return (r + r.conj().T) / 2


def _complex_normal(rng: np.random.Generator, shape, power) -> np.ndarray:
    scale = np.sqrt(np.asarray(power, dtype=float) / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_snapshots(geometry: ArrayGeometry, sources: SourceEnsemble, T: int,
                         seed=None) -> np.ndarray:
    """Draw ``T`` snapshots ``y(t) = A s(t) + v(t)`` under the stochastic model.

    Sources are independent circular complex Gaussian with their configured
    powers; noise is ``CN(0, noise_power I)``. Returns a ``size x T`` matrix.
    """
    check_positive_int(T, "T")
    rng = check_random_state(seed)
    a = steering_matrix(geometry, sources.angles)
    powers = np.asarray(sources.powers)[:, None]
    s = _complex_normal(rng, (sources.n_sources, T), powers)
    v = _complex_normal(rng, (geometry.size, T), sources.noise_power)
    return a @ s + v


def sample_covariance(y: np.ndarray) -> np.ndarray:
    """``(1/T) sum_t y(t) y(t)^H``, symmetrized against roundoff."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] < 1:
        raise ValueError("need at least one snapshot")
    return hermitian_part(y @ y.conj().T / y.shape[1])


def true_covariance(geometry: ArrayGeometry, sources: SourceEnsemble) -> np.ndarray:
    """Model covariance ``A R_s A^H + sigma_v^2 I``."""
    a = steering_matrix(geometry, sources.angles)
    r = (a * np.asarray(sources.powers)) @ a.conj().T
    r = r + sources.noise_power * np.eye(geometry.size)
    return hermitian_part(r)
