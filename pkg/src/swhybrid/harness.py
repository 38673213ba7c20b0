"""Experiment presets, Monte Carlo orchestration and CSV output.

Every preset returns rows ``(x, series, y)``. Trials draw from seeds derived
from ``(seed, point, trial)`` and are reduced in trial order, so serial and
threaded runs write identical CSV bodies.
"""
from __future__ import annotations

import dataclasses
import json
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .array import ArrayGeometry, SelectionVector, SourceEnsemble, sample_covariance, \
    synthesize_snapshots
from .crlb import crlb_general, crlb_single_source
from .estimators import asn_dnn_estimate, root_music
from .neural import normalized_features
from .selection import SelectionConfig, boundary_template, constrained_select
from .sparse import AdmmConfig, admm_lasso, pick_peaks
from .swsha import (REFERENCE_DOF, AngleGrid, build_dictionary, build_schedule, dof,
                    max_slots, synthesize_augmented_covariance, vectorize_virtual)

PRESETS = ("dof-table", "swsha-spectrum", "swsha-rmse-snr", "asndnn-rmse-snr",
           "asndnn-rmse-theta", "crlb-delta")
PRESET_SNAPSHOTS = {"swsha-spectrum": 600, "swsha-rmse-snr": 600}
PRESET_DELTAS = {"crlb-delta": (1.0, 0.5, 0.3)}
THREADS_ENV = "SWHYBRID_THREADS"
SCALING_NOTE = ("Monte Carlo curves use the configured trial count (500 by default) "
                "instead of 5000; expect correspondingly wider confidence bands.")


class UsageError(ValueError):
    """Bad preset name or parameters."""


def _floats(v):
    if isinstance(v, str):
        return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass
class ExperimentConfig:
    """Flat experiment parameters. Angles are in degrees, SNRs in dB."""

    preset: str = "dof-table"
    m: int = 128
    k: int = 8
    slots: int = 0
    snapshots: int = 0
    n_sources: int = 16
    angles: tuple = ()
    snr: tuple = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0)
    theta: float = 30.0
    deltas: tuple = ()
    trials: int = 500
    seed: int = 0
    alpha: float = 0.25
    zeta: str = "auto"
    admm_iter: int = 500
    grid_step: float = 1.0
    eps: float = 0.5
    loop_iter: int = 10
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: int = 16
    realizations: int = 20
    models: str = ""
    output: str = ""

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        self.angles = _floats(self.angles)
        self.snr = _floats(self.snr)
        self.deltas = _floats(self.deltas) or PRESET_DELTAS.get(self.preset, (1.0, 0.5))
        if self.snapshots == 0:
            self.snapshots = PRESET_SNAPSHOTS.get(self.preset, 100)
        if self.snapshots < 1:
            raise UsageError("snapshots must be at least 1")
        if self.trials < 1:
            raise UsageError("trials must be at least 1")
        if not self.snr:
            raise UsageError("SNR sweep is empty")

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in types:
                raise UsageError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(raw, dataclasses.fields(cls)[list(types).index(key)].default)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in dataclasses.asdict(self).items()}


def _coerce(raw, default):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return _floats(raw)
    return raw


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def rmse(estimates, truth) -> float:
    """Root mean squared error in the units of the inputs."""
    e = np.asarray(estimates, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("no estimates")
    return float(np.sqrt(np.mean((e - truth) ** 2)))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Ordered map over ``items``, threaded when ``threads > 1``."""
    threads = thread_count() if threads is None else threads
    items = list(items)
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def trial_seed(seed: int, point: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((seed, point, trial))


def _sq_error_sum(fn, n_trials, seed, point, truth, threads) -> float:
    ests = parallel_map(lambda t: fn(trial_seed(seed, point, t)), range(n_trials), threads)
    return float(np.sum((np.asarray(ests, dtype=float) - truth) ** 2))


def run_dof_table(cfg: ExperimentConfig):
    l_max = max_slots(cfg.m, cfg.k)
    sched = build_schedule(cfg.m, cfg.k, cfg.slots or None)
    rows = [(cfg.k, "swsha_lmax", l_max),
            (cfg.k, "swsha", dof(sched)),
            (cfg.k, "ula", dof(ArrayGeometry.ula(cfg.k)))]
    if (cfg.m, cfg.k) == (128, 8):
        rows += [(cfg.k, name, val) for name, val in REFERENCE_DOF.items()]
    return rows


def default_spectrum_angles(n: int) -> np.ndarray:
    """``n`` integer angles spread evenly over [-60, 60] degrees."""
    return np.round(np.linspace(-60, 60, n))


def run_swsha_spectrum(cfg: ExperimentConfig):
    sched = build_schedule(cfg.m, cfg.k, cfg.slots or None)
    angles = np.asarray(cfg.angles) if cfg.angles else default_spectrum_angles(cfg.n_sources)
    snr = cfg.snr[0] if len(cfg.snr) == 1 else 0.0
    src = SourceEnsemble.from_snr(np.deg2rad(angles), snr)
    r = synthesize_augmented_covariance(sched, src, cfg.snapshots, trial_seed(cfg.seed, 0, 0))
    vs = vectorize_virtual(r, sched.augmented)
    grid = AngleGrid(-90, 90, cfg.grid_step)
    d = build_dictionary(vs, grid)
    res = admm_lasso(d, vs, AdmmConfig(cfg.alpha, _zeta(cfg.zeta), cfg.admm_iter))
    peaks = pick_peaks(res.spectrum, d.grid_deg, angles.size)
    rows = [(g, "spectrum", v) for g, v in zip(d.grid_deg, np.clip(res.spectrum, 0, None))]
    rows += [(a, "truth", 1.0) for a in np.sort(angles)]
    rows += [(p, "estimate", 1.0) for p in peaks]
    return rows


def _zeta(z):
    return z if z == "auto" else float(z)


def run_swsha_rmse_snr(cfg: ExperimentConfig):
    sched = build_schedule(cfg.m, cfg.k, cfg.slots or None)
    theta = cfg.angles[0] if cfg.angles else -67.131
    grid = AngleGrid(-90, 90, cfg.grid_step)
    p = np.asarray(sched.augmented.indices)
    d = build_dictionary((p[:, None] - p[None, :]).ravel(order="F"), grid)
    admm = AdmmConfig(cfg.alpha, _zeta(cfg.zeta), cfg.admm_iter)
    rows = []
    for point, snr in enumerate(cfg.snr):
        src = SourceEnsemble.from_snr(np.deg2rad(theta), snr)

        def trial(seed):
            r = synthesize_augmented_covariance(sched, src, cfg.snapshots, seed)
            res = admm_lasso(d, vectorize_virtual(r, p), admm)
            return pick_peaks(res.spectrum, d.grid_deg, 1)[0]

        sse = _sq_error_sum(trial, cfg.trials, cfg.seed, point, theta, None)
        rows.append((snr, "swsha", np.sqrt(sse / cfg.trials)))
        bound = crlb_general(sched.augmented, src, cfg.snapshots).per_source[0]
        rows.append((snr, "crlb_augmented", np.rad2deg(np.sqrt(bound))))
    return rows


def run_crlb_delta(cfg: ExperimentConfig):
    theta = np.deg2rad(cfg.theta)
    rows = []
    for delta in cfg.deltas:
        sel = constrained_select(theta, cfg.k, cfg.m,
                                 SelectionConfig(delta=delta, seed=cfg.seed))
        for snr in cfg.snr:
            c = crlb_single_source(sel, theta, 10 ** (snr / 10), cfg.snapshots)
            rows.append((snr, f"delta={delta:g}", np.rad2deg(np.sqrt(c))))
    ula = SelectionVector.from_indices(range(1, cfg.k + 1), cfg.m)
    for snr in cfg.snr:
        c = crlb_single_source(ula, theta, 10 ** (snr / 10), cfg.snapshots)
        rows.append((snr, "ula", np.rad2deg(np.sqrt(c))))
    return rows


def _asndnn_curves(cfg: ExperimentConfig, points):
    """RMSE of ASN-DNN per delta plus the ULA baselines at each ``(theta, snr)``."""
    from .models import load_or_train

    bundle = load_or_train(cfg)
    full = ArrayGeometry.ula(cfg.m)
    ula = ArrayGeometry.ula(cfg.k)
    rho0 = SelectionVector.from_indices(boundary_template(cfg.m, cfg.k), cfg.m)
    rows = []
    for point, (x, theta, snr) in enumerate(points):
        src = SourceEnsemble.from_snr(np.deg2rad(theta), snr)
        for delta in cfg.deltas:
            asn, dnn = bundle.asn[delta], bundle.dnn[delta]
            sse = _sq_error_sum(
                lambda s: np.rad2deg(asn_dnn_estimate(
                    asn, dnn, full, src, cfg.snapshots, rho0, np.deg2rad(cfg.eps),
                    cfg.loop_iter, s).theta),
                cfg.trials, cfg.seed, point, theta, None)
            rows.append((x, f"asn_dnn_delta={delta:g}", np.sqrt(sse / cfg.trials)))

        def ula_cov(seed):
            return sample_covariance(synthesize_snapshots(ula, src, cfg.snapshots, seed))

        sse = _sq_error_sum(
            lambda s: bundle.dnn_ula.predict(normalized_features(ula_cov(s))[None, :])[0],
            cfg.trials, cfg.seed, point, theta, None)
        rows.append((x, "dnn_ula", np.sqrt(sse / cfg.trials)))
        sse = _sq_error_sum(lambda s: np.rad2deg(root_music(ula_cov(s), ula, 1)[0]),
                            cfg.trials, cfg.seed, point, theta, None)
        rows.append((x, "root_music_ula", np.sqrt(sse / cfg.trials)))
    return rows


def run_asndnn_rmse_snr(cfg: ExperimentConfig):
    return _asndnn_curves(cfg, [(snr, cfg.theta, snr) for snr in cfg.snr])


def run_asndnn_rmse_theta(cfg: ExperimentConfig):
    angles = cfg.angles or tuple(np.arange(-45.0, 46.0, 15.0))
    snr = cfg.snr[0]
    return _asndnn_curves(cfg, [(a, a, snr) for a in angles])


RUNNERS = {
    "dof-table": run_dof_table,
    "swsha-spectrum": run_swsha_spectrum,
    "swsha-rmse-snr": run_swsha_rmse_snr,
    "asndnn-rmse-snr": run_asndnn_rmse_snr,
    "asndnn-rmse-theta": run_asndnn_rmse_theta,
    "crlb-delta": run_crlb_delta,
}


def run_preset(cfg: ExperimentConfig):
    return RUNNERS[cfg.preset](cfg)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def rows_to_csv(rows) -> str:
    """CSV text with header ``x,series,y`` and LF line endings."""
    lines = ["x,series,y"] + [f"{_fmt(x)},{s},{_fmt(y)}" for x, s, y in rows]
    return "\n".join(lines) + "\n"


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=os.path.dirname(__file__))
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_outputs(cfg: ExperimentConfig, rows, path) -> tuple[str, str]:
    """Write the CSV and its ``.meta.json`` sidecar; returns both paths."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(rows))
    meta = {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "parameters": cfg.to_dict(),
        "git_describe": git_describe(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "threads": thread_count(),
        "note": SCALING_NOTE,
    }
    meta_path = str(path) + ".meta.json"
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path), meta_path
