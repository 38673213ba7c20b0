"""Dense MLP engine with hand-written backprop, plus the two networks built on it.

:class:`AntennaSelectionNetwork` maps ``cos(theta)`` to a K-hot switch
configuration (sigmoid head, BCE loss). :class:`DoaRegressor` maps covariance
features to an angle (linear head, MSE loss). Both follow the scikit-learn
estimator protocol.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import NumericalError, check_random_state, check_square
from .array import SelectionVector

ACTIVATIONS = ("relu", "sigmoid", "linear")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    return z


@dataclass
class Mlp:
    """Fully connected network, ReLU hidden layers and a configurable head.

    ``weights[h]`` has shape ``(layer_sizes[h], layer_sizes[h+1])`` and inputs
    are row vectors, so a layer computes ``x @ W + b``.
    """

    layer_sizes: tuple[int, ...]
    output_activation: str = "linear"
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)
    hidden_activation: str = "relu"

    def __post_init__(self):
        self.layer_sizes = tuple(int(g) for g in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.output_activation!r}")
        if not self.weights:
            self.weights = [np.zeros((a, b)) for a, b in
                            zip(self.layer_sizes[:-1], self.layer_sizes[1:])]
            self.biases = [np.zeros(b) for b in self.layer_sizes[1:]]
        self._check_shapes()

    def _check_shapes(self):
        for h, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[h], self.layer_sizes[h + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ValueError(f"layer {h} has shapes {w.shape}/{b.shape}, expected {want}")

    @classmethod
    def initialized(cls, layer_sizes, output_activation="linear", seed=None) -> "Mlp":
        """He-normal weights for ReLU layers, zero biases."""
        rng = check_random_state(seed)
        sizes = tuple(layer_sizes)
        weights = [rng.standard_normal((a, b)) * np.sqrt(2.0 / a)
                   for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(sizes, output_activation, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.output_activation,
                   [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.hidden_activation)

    def parameters(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]


def forward(mlp: Mlp, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != mlp.layer_sizes[0]:
        raise ValueError(f"input has {xb.shape[1]} features, network expects {mlp.layer_sizes[0]}")
    out = _forward_cache(mlp, xb)[-1]
    return out[0] if single else out


def _forward_cache(mlp: Mlp, xb):
    acts = [xb]
    for h, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        kind = mlp.output_activation if h == mlp.n_layers - 1 else mlp.hidden_activation
        acts.append(_activate(acts[-1] @ w + b, kind))
    return acts


def loss_value(mlp: Mlp, x, y, loss: str) -> float:
    out = forward(mlp, np.atleast_2d(x))
    return _loss(out, np.atleast_2d(y), loss)


def _loss(out, y, loss):
    n = out.shape[0]
    if loss == "mse":
        return float(np.sum((out - y) ** 2) / n)
    eps = 1e-12
    p = np.clip(out, eps, 1 - eps)
    return float(-np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)) / n)


def gradients(mlp: Mlp, x, y, loss: str):
    """Loss and parameter gradients ``[(dW_1, db_1), ...]`` by backprop.

    MSE is ``sum((out - y)^2) / n``. BCE is summed over outputs and averaged
    over the batch; with a sigmoid head its output-layer delta is
    ``(out - y) / n``.
    """
    xb, yb = np.atleast_2d(x), np.atleast_2d(y)
    n = xb.shape[0]
    acts = _forward_cache(mlp, xb)
    out = acts[-1]
    if loss == "mse":
        delta = 2.0 * (out - yb) / n
        if mlp.output_activation == "sigmoid":
            delta = delta * out * (1 - out)
        elif mlp.output_activation == "relu":
            delta = delta * (out > 0)
    elif loss == "bce":
        if mlp.output_activation != "sigmoid":
            raise ValueError("BCE loss expects a sigmoid output layer")
        delta = (out - yb) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grads = [None] * mlp.n_layers
    for h in range(mlp.n_layers - 1, -1, -1):
        grads[h] = (acts[h].T @ delta, delta.sum(axis=0))
        if h:
            delta = (delta @ mlp.weights[h].T) * (acts[h] > 0)
    return _loss(out, yb, loss), grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.loss not in ("mse", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")


class TrainingError(NumericalError):
    """Loss became non-finite during training."""


def train(mlp: Mlp, x, y, cfg: TrainConfig):
    """Mini-batch gradient descent. Returns ``(trained copy, per-epoch mean loss)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(x.shape[0], -1)
    if x.shape[0] == 0:
        raise ValueError("training set is empty")
    net = mlp.copy()
    rng = check_random_state(cfg.seed)
    n = x.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            value, grads = gradients(net, x[batch], y[batch], cfg.loss)
            if not np.isfinite(value):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            total += value * batch.size
            for h, (gw, gb) in enumerate(grads):
                net.weights[h] -= cfg.learning_rate * gw
                net.biases[h] -= cfg.learning_rate * gb
        history.append(total / n)
    return net, np.asarray(history)


def extract_features(r) -> np.ndarray:
    """Real/imaginary split of the row-major upper triangle of ``r``.

    ``[R11..R1K, R22..R2K, ..., RKK]`` real parts followed by imaginary parts,
    length ``K(K+1)``.
    """
    r = check_square(r, "covariance")
    iu = np.triu_indices(r.shape[0])
    upper = r[iu]
    return np.concatenate([upper.real, upper.imag])


def rebuild_covariance(features) -> np.ndarray:
    """Inverse of :func:`extract_features` for Hermitian matrices."""
    f = np.asarray(features, dtype=float)
    half = f.size // 2
    k = int(round((np.sqrt(1 + 8 * half) - 1) / 2))
    if k * (k + 1) != f.size:
        raise ValueError(f"{f.size} features do not come from a square matrix")
    iu = np.triu_indices(k)
    r = np.zeros((k, k), complex)
    r[iu] = f[:half] + 1j * f[half:]
    return r + np.triu(r, 1).conj().T


def normalized_features(r) -> np.ndarray:
    """Features of ``r * K / trace(r)``, which removes the overall power scale."""
    r = check_square(r, "covariance")
    tr = np.real(np.trace(r))
    if tr <= 0:
        raise ValueError("covariance has nonpositive trace")
    return extract_features(r * (r.shape[0] / tr))


def top_k(scores, k: int) -> SelectionVector:
    """K-hot vector of the largest scores, ties to the smaller index."""
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")[:k]
    rho = np.zeros(scores.size, dtype=int)
    rho[order] = 1
    return SelectionVector(tuple(rho))


class _MlpEstimator(BaseEstimator):
    _output_activation = "linear"
    _loss = "mse"

    def __init__(self, hidden_layer_sizes=(64,), epochs=2000, batch_size=16,
                 learning_rate=1e-3, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _fit(self, x, y):
        x = check_array(x)
        y = np.asarray(y, dtype=float).reshape(x.shape[0], -1)
        sizes = (x.shape[1], *self.hidden_layer_sizes, y.shape[1])
        init = Mlp.initialized(sizes, self._output_activation, self.random_state)
        cfg = TrainConfig(self.epochs, self.batch_size, self.learning_rate,
                          self.random_state, self._loss)
        self.mlp_, self.loss_curve_ = train(init, x, y, cfg)
        self.n_features_in_ = x.shape[1]
        return self

    def _raw(self, x):
        check_is_fitted(self, "mlp_")
        return forward(self.mlp_, check_array(x))


class DoaRegressor(RegressorMixin, _MlpEstimator):
    """Covariance-feature to angle regressor.

    ``fit`` takes angles in degrees; targets are scaled by ``angle_scale``
    internally and ``predict`` returns degrees.
    """

    def __init__(self, hidden_layer_sizes=(256, 128, 64), epochs=2000, batch_size=16,
                 learning_rate=1e-3, angle_scale=90.0, random_state=0):
        super().__init__(hidden_layer_sizes, epochs, batch_size, learning_rate, random_state)
        self.angle_scale = angle_scale

    def fit(self, x, y):
        return self._fit(x, np.asarray(y, dtype=float) / self.angle_scale)

    def predict(self, x):
        return self._raw(x)[:, 0] * self.angle_scale


class AntennaSelectionNetwork(ClassifierMixin, _MlpEstimator):
    """``cos(theta)`` to switch configuration, sigmoid head trained with BCE.

    ``fit`` takes a column of ``cos(theta)`` values and a 0/1 label matrix
    with one row per angle. ``predict`` returns the K-hot matrix of the top-K
    outputs.
    """

    _output_activation = "sigmoid"
    _loss = "bce"

    def __init__(self, hidden_layer_sizes=(64, 128), epochs=2000, batch_size=16,
                 learning_rate=1e-3, random_state=0):
        super().__init__(hidden_layer_sizes, epochs, batch_size, learning_rate, random_state)

    def fit(self, x, y):
        y = np.asarray(y)
        counts = y.sum(axis=1)
        if np.any(counts != counts[0]):
            raise ValueError("every label must select the same number of antennas")
        self.k_ = int(counts[0])
        return self._fit(x, y)

    def predict_proba(self, x):
        return self._raw(x)

    def predict(self, x):
        return np.array([top_k(p, self.k_).rho for p in self.predict_proba(x)])

    def select(self, theta: float) -> SelectionVector:
        """Switch configuration for one angle in radians."""
        return top_k(self.predict_proba([[np.cos(theta)]])[0], self.k_)

    def score(self, x, y):
        """Fraction of rows whose K-hot prediction matches the label exactly."""
        return float(np.mean(np.all(self.predict(x) == np.asarray(y), axis=1)))


_MAGIC = b"SWMLP1\n"
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_mlp(mlp: Mlp, path) -> None:
    """Write ``mlp`` in the flat binary model format (see README)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", len(mlp.layer_sizes),
                             _ACT_CODES[mlp.output_activation]))
        fh.write(struct.pack(f"<{len(mlp.layer_sizes)}I", *mlp.layer_sizes))
        for w, b in zip(mlp.weights, mlp.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_mlp(path) -> Mlp:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a saved MLP")
        n, act = struct.unpack("<II", fh.read(8))
        sizes = struct.unpack(f"<{n}I", fh.read(4 * n))
        weights, biases = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            weights.append(np.frombuffer(fh.read(8 * a * b), dtype="<f8").reshape(a, b).copy())
            biases.append(np.frombuffer(fh.read(8 * b), dtype="<f8").copy())
        if fh.read(1):
            raise ValueError(f"{path} has trailing bytes")
    return Mlp(sizes, ACTIVATIONS[act], weights, biases)


def asn_build_dataset(thetas, k: int, m: int, cfg=None):
    """ASN training pairs ``(cos(theta_i), optimal selection for theta_i)``.

    The label only depends on ``|theta|`` (the PSL is mirror-symmetric and the
    network input ``cos(theta)`` cannot tell the sign apart), so each
    magnitude is searched once.

    Returns:
        ``(x, y)`` with ``x`` of shape ``(N, 1)`` and 0/1 labels ``(N, M)``.
    """
    from .selection import constrained_select

    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if thetas.size == 0:
        raise ValueError("angle set is empty")
    cache = {}
    labels = []
    for t in thetas:
        key = round(abs(float(t)), 12)
        if key not in cache:
            cache[key] = constrained_select(key, k, m, cfg).rho
        labels.append(cache[key])
    return np.cos(thetas)[:, None], np.asarray(labels, dtype=float)


def dnn_build_dataset(thetas, selections, snrs_db, T: int, realizations: int, seed=None,
                      noise_power: float = 1.0):
    """DNN training pairs ``(normalized features, theta in degrees)``.

    For every angle, ``realizations`` covariances are drawn at each SNR on
    that angle's configuration.

    Args:
        thetas: Angles in radians.
        selections: One :class:`SelectionVector` per angle, or a single
            geometry/selection shared by all angles.
    """
    from .array import (ArrayGeometry, SourceEnsemble, compress_geometry, sample_covariance,
                        synthesize_snapshots)

    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if isinstance(selections, (ArrayGeometry, SelectionVector)):
        selections = [selections] * thetas.size
    if len(selections) != thetas.size:
        raise ValueError("need one selection per angle")
    ss = np.random.SeedSequence(seed)
    streams = iter(ss.spawn(thetas.size * len(snrs_db) * realizations))
    x, y = [], []
    for t, sel in zip(thetas, selections):
        geom = sel if isinstance(sel, ArrayGeometry) else \
            compress_geometry(ArrayGeometry.ula(sel.m), sel)
        for snr in snrs_db:
            src = SourceEnsemble.from_snr(t, snr, noise_power)
            for _ in range(realizations):
                r = sample_covariance(synthesize_snapshots(geom, src, T, next(streams)))
                x.append(normalized_features(r))
                y.append(np.rad2deg(t))
    return np.asarray(x), np.asarray(y)
