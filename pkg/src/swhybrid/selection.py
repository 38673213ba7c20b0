"""Beampattern, peak sidelobe level and PSL-constrained antenna selection."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import InfeasibleError, check_random_state
from .array import ArrayGeometry, SelectionVector
from .crlb import selection_objective

EXHAUSTIVE_LIMIT = 10 ** 6


@dataclass(frozen=True)
class SelectionConfig:
    """Search settings for PSL-constrained selection.

    Args:
        delta: PSL ceiling in [0, 1].
        grid_step_deg: Spacing of the scan grid over [-90, 90] degrees.
        mainlobe_halfwidth: Mainlobe exclusion in degrees around the steering
            angle. ``None`` masks ``|sin(theta) - sin(theta_m)| < 1/K``, half
            the null-to-null width of a K-element ULA.
        ratio: ``"power"`` compares ``(V_s/V_m)^2`` with ``delta``,
            ``"amplitude"`` compares ``V_s/V_m``.
        strategy: ``"exhaustive"`` or ``"greedy_swap"``.
        restarts: Extra random starts for the greedy search.
        seed: Seed for the random starts.
    """

    delta: float = 1.0
    grid_step_deg: float = 0.05
    mainlobe_halfwidth: float | None = None
    ratio: str = "power"
    strategy: str = "greedy_swap"
    restarts: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if not self.grid_step_deg > 0:
            raise ValueError("grid step must be positive")
        if self.ratio not in ("power", "amplitude"):
            raise ValueError(f"unknown PSL ratio {self.ratio!r}")
        if self.strategy not in ("exhaustive", "greedy_swap"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")

    @property
    def grid(self) -> np.ndarray:
        n = int(round(180 / self.grid_step_deg))
        return np.deg2rad(np.linspace(-90.0, 90.0, n + 1))


def _indices(selection) -> np.ndarray:
    if isinstance(selection, SelectionVector):
        return np.asarray(selection.indices, dtype=float)
    if isinstance(selection, ArrayGeometry):
        return selection.positions
    return np.asarray(selection, dtype=float)


def _element_responses(positions, theta_m: float, grid: np.ndarray) -> np.ndarray:
    """``a_p(theta)^* a_p(theta_m)`` for every position, shape ``(P, G)``."""
    du = np.sin(theta_m) - np.sin(grid)
    return np.exp(1j * np.pi * np.outer(positions, du))


def beampattern(selection, theta_m: float, grid) -> np.ndarray:
    """``|a^H(theta) W W^H a(theta_m)|`` on ``grid`` (radians)."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return np.abs(_element_responses(_indices(selection), theta_m, grid).sum(axis=0))


def _mainlobe_mask(theta_m: float, grid: np.ndarray, k: int, halfwidth) -> np.ndarray:
    if halfwidth is None:
        return np.abs(np.sin(grid) - np.sin(theta_m)) < 1.0 / k
    return np.abs(grid - theta_m) < np.deg2rad(halfwidth)


def _sidelobe_peaks(patterns: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Largest local maximum outside ``mask`` along the last axis (0 if none).

    A sample counts when it is at least as large as both neighbours and
    neither neighbour is masked; the two grid ends compare against one
    neighbour only.
    """
    n = mask.size
    open_left = np.concatenate([[True], ~mask[:-1]])
    open_right = np.concatenate([~mask[1:], [True]])
    idx = np.flatnonzero(~mask & open_left & open_right)
    if idx.size == 0:
        return np.zeros(patterns.shape[:-1])
    centre = patterns[..., idx]
    left = patterns[..., np.maximum(idx - 1, 0)]
    right = patterns[..., np.minimum(idx + 1, n - 1)]
    peak = (centre >= left) & (centre >= right)
    return np.where(peak, centre, 0.0).max(axis=-1)


def _to_ratio(vs: np.ndarray, k: int, ratio: str) -> np.ndarray:
    r = np.clip(vs / k, 0.0, 1.0)
    return r ** 2 if ratio == "power" else r


def psl(selection, theta_m: float, cfg: SelectionConfig | None = None) -> float:
    """Peak sidelobe level of ``selection`` steered to ``theta_m``.

    Returns 1.0 for a single antenna and 0.0 when the pattern has no sidelobe
    peak outside the mainlobe.
    """
    return psl_details(selection, theta_m, cfg)[0]


def psl_details(selection, theta_m: float, cfg: SelectionConfig | None = None):
    """Like :func:`psl` but also returns a flag for degenerate patterns."""
    cfg = cfg or SelectionConfig()
    p = _indices(selection)
    k = p.size
    if k == 1:
        return 1.0, True
    grid = cfg.grid
    pattern = beampattern(p, theta_m, grid)
    mask = _mainlobe_mask(theta_m, grid, k, cfg.mainlobe_halfwidth)
    vs = _sidelobe_peaks(pattern, mask)
    return float(_to_ratio(vs, k, cfg.ratio)), bool(vs == 0)


class _SwapEvaluator:
    """Scores whole selections and all single swaps of a selection at once."""

    def __init__(self, m: int, k: int, theta_m: float, cfg: SelectionConfig):
        self.m, self.k, self.cfg = m, k, cfg
        self.check_psl = cfg.delta < 1.0
        self.pos = np.arange(1, m + 1, dtype=float)
        if self.check_psl:
            grid = cfg.grid
            self.resp = _element_responses(self.pos, theta_m, grid)
            self.mask = _mainlobe_mask(theta_m, grid, k, cfg.mainlobe_halfwidth)

    def psl_of(self, patterns_complex: np.ndarray) -> np.ndarray:
        # squared magnitude has the same peaks and skips a full-array sqrt
        power = patterns_complex.real ** 2 + patterns_complex.imag ** 2
        vs = np.sqrt(_sidelobe_peaks(power, self.mask))
        return _to_ratio(vs, self.k, self.cfg.ratio)

    def score(self, sel: np.ndarray):
        obj = selection_objective(self.pos[sel])
        if not self.check_psl:
            return 0.0, obj
        return float(self.psl_of(self.resp[sel].sum(axis=0))), obj

    def swap_objectives(self, sel: np.ndarray):
        """Objective of every ``(out, in)`` swap, shaped ``(K, M-K)``."""
        chosen = np.zeros(self.m, bool)
        chosen[sel] = True
        others = np.flatnonzero(~chosen)
        p_in, p_out = self.pos[others], self.pos[sel]
        s1, s2 = p_out.sum(), (p_out ** 2).sum()
        s1n = s1 - p_out[:, None] + p_in[None, :]
        s2n = s2 - p_out[:, None] ** 2 + p_in[None, :] ** 2
        return others, self.k * s2n - s1n ** 2

    def swap_psl(self, sel: np.ndarray, others: np.ndarray, outs, ins) -> np.ndarray:
        """PSL after swapping ``sel[outs]`` for ``others[ins]``, pairwise."""
        if not self.check_psl:
            return np.zeros(len(outs))
        base = self.resp[sel].sum(axis=0)
        return self.psl_of(base - self.resp[sel[outs]] + self.resp[others[ins]])


_CHUNK = 64


def _better(a, b, delta) -> bool:
    """Compare ``(psl, objective, indices)`` triples: feasibility first."""
    fa, fb = a[0] <= delta, b[0] <= delta
    if fa != fb:
        return fa
    if not fa:
        return a[0] < b[0]
    if a[1] != b[1]:
        return a[1] > b[1]
    return a[2] < b[2]


def boundary_template(m: int, k: int) -> tuple[int, ...]:
    """``{1..ceil(K/2)} U {M-floor(K/2)+1..M}``."""
    head = list(range(1, math.ceil(k / 2) + 1))
    tail = list(range(m - k // 2 + 1, m + 1))
    return tuple(head + tail)


def _greedy_run(ev: _SwapEvaluator, start: np.ndarray, delta: float):
    """Best-improvement swap search.

    From a feasible selection, move to the feasible swap with the largest
    objective gain. From an infeasible one, move to the best feasible swap,
    or to the swap with the lowest PSL when none is feasible. PSL is only
    evaluated in descending-objective order until the first feasible swap,
    which is also the feasible argmax (stable order keeps the tie rule).
    """
    sel = np.sort(start)
    psl_val, obj = ev.score(sel)
    cur = (psl_val, obj, tuple(sel + 1))
    while True:
        others, objs = ev.swap_objectives(sel)
        flat = objs.ravel()
        order = np.argsort(-flat, kind="stable")
        feasible_now = cur[0] <= delta
        if feasible_now:
            order = order[flat[order] > cur[1]]
        psls = np.full(flat.size, np.inf)
        pick = None
        for c in range(0, order.size, _CHUNK):
            chunk = order[c:c + _CHUNK]
            outs, ins = np.unravel_index(chunk, objs.shape)
            psls[chunk] = ev.swap_psl(sel, others, outs, ins)
            ok = np.flatnonzero(psls[chunk] <= delta)
            if ok.size:
                pick = int(chunk[ok[0]])
                break
        if pick is None:
            if feasible_now:
                return cur
            pick = int(np.argmin(psls))
            if not psls[pick] < cur[0]:
                return cur
        i, j = np.unravel_index(pick, objs.shape)
        sel = np.sort(np.concatenate([np.delete(sel, i), [others[j]]]))
        cur = (float(psls[pick]), float(flat[pick]), tuple(sel + 1))


def _exhaustive(ev: _SwapEvaluator, m: int, k: int, delta: float):
    best = None
    for combo in itertools.combinations(range(m), k):
        sel = np.asarray(combo)
        psl_val, obj = ev.score(sel)
        cand = (psl_val, obj, tuple(sel + 1))
        if best is None or _better(cand, best, delta):
            best = cand
    return best


def constrained_select(theta: float, k: int, geometry: ArrayGeometry | int,
                       cfg: SelectionConfig | None = None) -> SelectionVector:
    """Selection maximizing the CRLB objective subject to ``PSL <= delta``.

    Raises:
        InfeasibleError: if no visited selection meets the PSL ceiling.
    """
    cfg = cfg or SelectionConfig()
    m = geometry if isinstance(geometry, int) else geometry.size
    if isinstance(geometry, ArrayGeometry) and not geometry.is_contiguous():
        raise ValueError("selection runs over a full contiguous ULA")
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= K <= M, got K={k}, M={m}")
    ev = _SwapEvaluator(m, k, theta, cfg)
    if cfg.strategy == "exhaustive":
        if math.comb(m, k) > EXHAUSTIVE_LIMIT:
            raise ValueError(f"C({m},{k}) candidates exceed the exhaustive limit")
        best = _exhaustive(ev, m, k, cfg.delta)
    else:
        rng = check_random_state(cfg.seed)
        starts = [np.asarray(boundary_template(m, k)) - 1]
        starts += [rng.choice(m, size=k, replace=False) for _ in range(cfg.restarts)]
        best = None
        for start in starts:
            cand = _greedy_run(ev, start, cfg.delta)
            if best is None or _better(cand, best, cfg.delta):
                best = cand
    if best[0] > cfg.delta:
        raise InfeasibleError(
            f"no selection with PSL <= {cfg.delta} found; minimum PSL seen {best[0]:.4f}")
    return SelectionVector.from_indices(best[2], m)
