"""Time-switched sparse hybrid array (SW-SHA).

Over ``L`` time slots the switch network realizes ``L`` interleaved
two-level nested subarrays. Stacking the phase-compensated slot outputs gives
an augmented array of ``L*K`` distinct antennas whose difference co-array is
hole-free, so the vectorized covariance acts as a single snapshot on a long
virtual ULA.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int
from .array import (ArrayGeometry, SourceEnsemble, sample_covariance,
                    synthesize_snapshots, true_covariance)

# DOF of the comparison architectures at M=128, K=8, as published alongside the
# SW-SHA result. Their constructions are not implemented here.
REFERENCE_DOF = {"nested": 19, "coprime": 15, "csa": 31}


def nested_split(k: int) -> tuple[int, int]:
    """Inner/outer level sizes ``(K1, K2)`` that maximize the nested-array DOF."""
    if k % 2 == 0:
        return k // 2, k // 2
    return (k - 1) // 2, (k + 1) // 2


def max_slots(m: int, k: int) -> int:
    """Largest slot count whose augmented aperture still fits in ``m`` antennas."""
    if k % 2 == 0:
        return (4 * m) // (k * k + 2 * k)
    return (4 * m) // ((k + 1) ** 2)


@dataclass(frozen=True)
class NestedSchedule:
    """Per-slot nested subarrays.

    ``switch_delay`` is bookkeeping only: its phase rotation is compensated
    exactly, so it never enters a computation.
    """

    m: int
    k1: int
    k2: int
    n_slots: int
    switch_delay: float = 0.0
    slot_sets: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        for name in ("m", "k1", "k2", "n_slots"):
            check_positive_int(getattr(self, name), name)
        if self.switch_delay < 0:
            raise ValueError("switch delay must be nonnegative")
        if self.aperture > self.m:
            raise ValueError(
                f"L={self.n_slots} needs aperture {self.aperture} > M={self.m}")
        sets = tuple(subarray_indices(l, self.k1, self.k2, self.n_slots)
                     for l in range(1, self.n_slots + 1))
        object.__setattr__(self, "slot_sets", sets)

    @property
    def k(self) -> int:
        return self.k1 + self.k2

    @property
    def aperture(self) -> int:
        return self.k2 * (self.k1 + 1) * self.n_slots

    @property
    def augmented(self) -> ArrayGeometry:
        """Sorted union of all slot sets."""
        return ArrayGeometry(tuple(sorted(i for s in self.slot_sets for i in s)))

    def slot_geometry(self, l: int) -> ArrayGeometry:
        return ArrayGeometry(self.slot_sets[l - 1])

    def to_text(self) -> str:
        """One slot per line, comma-separated 1-based indices."""
        return "".join(",".join(str(i) for i in s) + "\n" for s in self.slot_sets)

    @classmethod
    def from_text(cls, text: str, m: int) -> "NestedSchedule":
        rows = [tuple(int(v) for v in line.split(",")) for line in text.splitlines()
                if line.strip()]
        if not rows:
            raise ValueError("schedule text has no slots")
        k1, k2 = nested_split(len(rows[0]))
        sched = cls(m, k1, k2, len(rows))
        if tuple(rows) != sched.slot_sets:
            raise ValueError("slot sets do not follow the nested layout")
        return sched


def subarray_indices(l: int, k1: int, k2: int, n_slots: int) -> tuple[int, ...]:
    """Antenna indices switched in during slot ``l`` (1-based)."""
    if not 1 <= l <= n_slots:
        raise ValueError(f"slot {l} outside 1..{n_slots}")
    inner = [(i - 1) * n_slots + l for i in range(1, k1 + 1)]
    outer = [(i * (k1 + 1) - 1) * n_slots + l for i in range(1, k2 + 1)]
    return tuple(inner + outer)


def build_schedule(m: int, k: int, n_slots: int | None = None,
                   switch_delay: float = 0.0) -> NestedSchedule:
    """Nested slot plan for ``k`` RF chains on ``m`` antennas.

    If ``n_slots`` is omitted the largest feasible slot count is used.
    """
    check_positive_int(m, "m")
    check_positive_int(k, "k")
    if k < 2:
        raise ValueError("SW-SHA needs at least two RF chains")
    if m < k:
        raise ValueError(f"K={k} exceeds M={m}")
    l_max = max_slots(m, k)
    if l_max == 0:
        raise ValueError(f"M={m} is too small for a nested subarray with K={k}")
    if n_slots is None:
        n_slots = l_max
    elif n_slots > l_max:
        raise ValueError(f"L={n_slots} exceeds the feasible maximum {l_max} for M={m}, K={k}")
    k1, k2 = nested_split(k)
    return NestedSchedule(m, k1, k2, n_slots, switch_delay)


@dataclass(frozen=True)
class DifferenceCoarray:
    lags: np.ndarray
    unique_lags: np.ndarray
    consecutive: np.ndarray

    @property
    def dof(self) -> int:
        return int((self.consecutive.size - 1) // 2)


def difference_coarray(positions) -> DifferenceCoarray:
    """All pairwise differences of ``positions`` and the central hole-free run."""
    if isinstance(positions, ArrayGeometry):
        positions = positions.indices
    p = np.asarray(positions, dtype=int)
    lags = np.sort((p[:, None] - p[None, :]).ravel())
    uniq = np.unique(lags)
    present = set(uniq.tolist())
    u = 0
    while u + 1 in present:
        u += 1
    return DifferenceCoarray(lags, uniq, np.arange(-u, u + 1))


def dof(coarray: DifferenceCoarray | ArrayGeometry | NestedSchedule) -> int:
    """Number of resolvable sources via the central consecutive co-array segment."""
    if isinstance(coarray, NestedSchedule):
        coarray = coarray.augmented
    if not isinstance(coarray, DifferenceCoarray):
        coarray = difference_coarray(coarray)
    return coarray.dof


def synthesize_augmented_covariance(schedule: NestedSchedule, sources: SourceEnsemble,
                                    T: int | None, seed=None) -> np.ndarray:
    """Covariance of the stacked, phase-compensated slot outputs.

    After compensation every slot block is driven by the same ``s(t)`` while
    noise stays independent across slots, which is statistically the same as
    one ``L*K`` element array on the augmented positions. Rows follow the
    sorted augmented indices. ``T=None`` returns the exact model covariance.
    """
    geom = schedule.augmented
    if T is None:
        return true_covariance(geom, sources)
    return sample_covariance(synthesize_snapshots(geom, sources, T, seed))


@dataclass(frozen=True)
class VirtualSignal:
    """Column-major ``vec`` of a covariance with the lag of every entry."""

    values: np.ndarray
    lags: np.ndarray

    def __len__(self):
        return self.values.size


def vectorize_virtual(r: np.ndarray, positions) -> VirtualSignal:
    """Entry ``i + j*n`` of ``vec(R)`` carries lag ``p_i - p_j``."""
    r = np.asarray(r)
    if isinstance(positions, ArrayGeometry):
        positions = positions.indices
    p = np.asarray(positions, dtype=int)
    if r.ndim != 2 or r.shape != (p.size, p.size):
        raise ValueError(f"covariance shape {r.shape} does not match {p.size} positions")
    lags = (p[:, None] - p[None, :]).ravel(order="F")
    return VirtualSignal(r.ravel(order="F").astype(complex), lags)


@dataclass(frozen=True)
class AngleGrid:
    """Half-open angle grid ``[start, stop)`` in degrees with spacing ``step``."""

    start: float = -90.0
    stop: float = 90.0
    step: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not self.stop > self.start:
            raise ValueError("grid is empty")

    @property
    def degrees(self) -> np.ndarray:
        n = int(round((self.stop - self.start) / self.step))
        return self.start + self.step * np.arange(n)

    @property
    def radians(self) -> np.ndarray:
        return np.deg2rad(self.degrees)

    def __len__(self):
        return self.degrees.size


@dataclass(frozen=True)
class DictionaryMatrix:
    grid_deg: np.ndarray
    matrix: np.ndarray

    @property
    def grid_rad(self) -> np.ndarray:
        return np.deg2rad(self.grid_deg)


def build_dictionary(lags, grid: AngleGrid | np.ndarray) -> DictionaryMatrix:
    """On-grid co-array dictionary, rows aligned to ``lags``.

    Entry ``(row, q)`` is ``exp(j pi D_row sin(grid_q))`` (half-wavelength grid).
    """
    if isinstance(lags, VirtualSignal):
        lags = lags.lags
    deg = grid.degrees if isinstance(grid, AngleGrid) else np.atleast_1d(np.asarray(grid, float))
    if deg.size == 0:
        raise ValueError("dictionary grid is empty")
    lags = np.asarray(lags, dtype=float)
    mat = np.exp(1j * np.pi * np.outer(lags, np.sin(np.deg2rad(deg))))
    return DictionaryMatrix(deg, mat)
