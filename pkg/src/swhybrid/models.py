"""Training, saving and loading the ASN/DNN model bundle.

A bundle holds one ASN and one DNN per PSL bound ``delta`` plus a DNN for
the contiguous K-element ULA baseline. On disk it is a directory with one
``.mlp`` file per network (format in :func:`~swhybrid.neural.save_mlp`) and
a ``bundle.json`` manifest.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .array import SelectionVector
from .neural import (AntennaSelectionNetwork, DoaRegressor, asn_build_dataset,
                     dnn_build_dataset, load_mlp, save_mlp)
from .selection import SelectionConfig

TRAIN_RANGE_DEG = (-60.0, 60.0)
TRAIN_STEP_DEG = 1.0
TRAIN_SNR_DB = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0)
ASN_EPOCHS = 200
ASN_LEARNING_RATE = 0.05


@dataclass
class ModelBundle:
    m: int
    k: int
    asn: dict = field(default_factory=dict)
    dnn: dict = field(default_factory=dict)
    dnn_ula: DoaRegressor | None = None


def training_angles() -> np.ndarray:
    """Training angles in radians: 1 degree steps over [-60, 60)."""
    lo, hi = TRAIN_RANGE_DEG
    return np.deg2rad(np.arange(lo, hi, TRAIN_STEP_DEG))


def train_bundle(m: int, k: int, deltas, snapshots: int = 100, epochs: int = 200,
                 learning_rate: float = 1e-2, batch_size: int = 16, realizations: int = 20,
                 seed: int = 0, log=None) -> ModelBundle:
    """Train every network needed by the ASN-DNN presets.

    Each DNN sees ``realizations`` covariances per (angle, SNR) drawn on the
    configuration its ASN would pick at that angle, so every network gets the
    same amount of data.
    """
    thetas = training_angles()
    bundle = ModelBundle(m, k)
    dnn_kw = dict(epochs=epochs, learning_rate=learning_rate, batch_size=batch_size,
                  random_state=seed)
    for i, delta in enumerate(deltas):
        x_asn, labels = asn_build_dataset(thetas, k, m, SelectionConfig(delta=delta, seed=seed))
        asn = AntennaSelectionNetwork(epochs=ASN_EPOCHS, learning_rate=ASN_LEARNING_RATE,
                                      random_state=seed).fit(x_asn, labels)
        sels = [SelectionVector(tuple(int(v) for v in row)) for row in labels]
        x, y = dnn_build_dataset(thetas, sels, TRAIN_SNR_DB, snapshots, realizations,
                                 seed=(seed, 1, i))
        bundle.asn[float(delta)] = asn
        bundle.dnn[float(delta)] = DoaRegressor(**dnn_kw).fit(x, y)
        if log:
            log(f"trained delta={delta:g}")
    ula = SelectionVector.from_indices(range(1, k + 1), m)
    x, y = dnn_build_dataset(thetas, ula, TRAIN_SNR_DB, snapshots, realizations, seed=(seed, 0))
    bundle.dnn_ula = DoaRegressor(**dnn_kw).fit(x, y)
    if log:
        log("trained ula")
    return bundle


def _restore(cls, mlp, **extra):
    est = cls()
    est.mlp_ = mlp
    est.n_features_in_ = mlp.layer_sizes[0]
    for key, value in extra.items():
        setattr(est, key, value)
    return est


def save_bundle(bundle: ModelBundle, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = {"m": bundle.m, "k": bundle.k, "deltas": sorted(bundle.asn), "files": {}}
    for delta in sorted(bundle.asn):
        for kind, est in (("asn", bundle.asn[delta]), ("dnn", bundle.dnn[delta])):
            name = f"{kind}_delta{delta:g}.mlp"
            save_mlp(est.mlp_, os.path.join(directory, name))
            manifest["files"][name] = {"kind": kind, "delta": delta}
    save_mlp(bundle.dnn_ula.mlp_, os.path.join(directory, "dnn_ula.mlp"))
    manifest["files"]["dnn_ula.mlp"] = {"kind": "dnn_ula"}
    with open(os.path.join(directory, "bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(directory) -> ModelBundle:
    with open(os.path.join(directory, "bundle.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    bundle = ModelBundle(manifest["m"], manifest["k"])
    for name, info in manifest["files"].items():
        mlp = load_mlp(os.path.join(directory, name))
        if info["kind"] == "asn":
            bundle.asn[float(info["delta"])] = _restore(AntennaSelectionNetwork, mlp,
                                                        k_=manifest["k"])
        elif info["kind"] == "dnn":
            bundle.dnn[float(info["delta"])] = _restore(DoaRegressor, mlp)
        else:
            bundle.dnn_ula = _restore(DoaRegressor, mlp)
    return bundle


def load_or_train(cfg) -> ModelBundle:
    """Load ``cfg.models`` if it holds a bundle covering ``cfg.deltas``; else train.

    A freshly trained bundle is saved to ``cfg.models`` when that is set.
    """
    path = cfg.models
    if path and os.path.exists(os.path.join(path, "bundle.json")):
        bundle = load_bundle(path)
        if (bundle.m, bundle.k) == (cfg.m, cfg.k) and all(float(d) in bundle.asn
                                                         for d in cfg.deltas):
            return bundle
    bundle = train_bundle(cfg.m, cfg.k, cfg.deltas, cfg.snapshots, cfg.epochs,
                          cfg.learning_rate, cfg.batch_size, cfg.realizations, cfg.seed)
    if path:
        save_bundle(bundle, path)
    return bundle
