"""Per-corner feed-forward surrogate trained by full-batch MSE regression.

Inputs are unit-cube coordinates, outputs are z-scored measurements. The
network is a stack of affine layers with tanh between them and a linear
output; the default shape is n -> 64 -> 64 -> n_measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

STD_FLOOR = 1e-12
SNAPSHOT_FORMAT = "trsearch-surrogate"
SNAPSHOT_VERSION = 1


class SurrogateError(RuntimeError):
    pass


class SnapshotError(ValueError):
    pass


@dataclass
class TrainBatch:
    inputs: np.ndarray  # (m, n_inputs), unit cube
    targets: np.ndarray  # (m, n_outputs), normalized

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) != len(self.targets) or len(self.inputs) < 1:
            raise ValueError("batch needs >= 1 sample and equal input/target counts")


class SurrogateModel:
    def __init__(
        self,
        n_inputs: int,
        measurements: Sequence[str],
        hidden: Sequence[int] = (64, 64),
        seed: int | np.random.Generator = 0,
    ):
        self.measurements = tuple(measurements)
        self.layer_sizes = (int(n_inputs), *(int(h) for h in hidden), len(self.measurements))
        self.out_mean = np.zeros(len(self.measurements))
        self.out_std = np.ones(len(self.measurements))
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self.last_initial_loss = math.nan
        self.last_final_loss = math.nan
        self.last_epochs = 0
        self.early_stopped = False
        self.init_weights(np.random.default_rng(seed))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    def init_weights(self, rng: np.random.Generator):
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def set_params(self, params: Sequence[np.ndarray]):
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self) -> "SurrogateModel":
        other = object.__new__(SurrogateModel)
        other.__dict__.update(self.__dict__)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.out_mean = self.out_mean.copy()
        other.out_std = self.out_std.copy()
        return other

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        """Normalized outputs for a (k, n_inputs) array."""
        a = np.atleast_2d(np.asarray(inputs, dtype=float))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < last:
                a = np.tanh(a)
        return a

    def predict_array(self, inputs: np.ndarray) -> np.ndarray:
        return self.forward(inputs) * self.out_std + self.out_mean

    def normalize_targets(self, raw: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(raw) - self.out_mean) / self.out_std

    def refresh_normalization(self, raw_targets: np.ndarray):
        raw = np.atleast_2d(np.asarray(raw_targets, dtype=float))
        self.out_mean = raw.mean(axis=0)
        self.out_std = np.maximum(raw.std(axis=0), STD_FLOOR)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    # -- snapshots ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "measurements": list(self.measurements),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "out_mean": self.out_mean.tolist(),
            "out_std": self.out_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, expect_sizes: Sequence[int] | None = None) -> "SurrogateModel":
        if data.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError("not a surrogate weight snapshot")
        if data.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {data.get('version')!r}")
        sizes = tuple(int(s) for s in data["layer_sizes"])
        if expect_sizes is not None and sizes != tuple(expect_sizes):
            raise SnapshotError(f"snapshot layer sizes {sizes} do not match expected {tuple(expect_sizes)}")
        weights = [np.asarray(w, dtype=float) for w in data["weights"]]
        biases = [np.asarray(b, dtype=float) for b in data["biases"]]
        if len(weights) != len(sizes) - 1 or len(biases) != len(weights):
            raise SnapshotError("snapshot layer count does not match layer_sizes")
        for w, b, fi, fo in zip(weights, biases, sizes[:-1], sizes[1:]):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise SnapshotError(f"layer shape {w.shape}/{b.shape} does not match ({fi}, {fo})")
        m = cls(sizes[0], data["measurements"], hidden=sizes[1:-1])
        m.weights, m.biases = weights, biases
        m.out_mean = np.asarray(data["out_mean"], dtype=float)
        m.out_std = np.asarray(data["out_std"], dtype=float)
        if m.out_mean.shape != (sizes[-1],) or m.out_std.shape != (sizes[-1],):
            raise SnapshotError("normalization statistics do not match output size")
        return m

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, expect_sizes=None) -> "SurrogateModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), expect_sizes)


def predict(model: SurrogateModel, u: Sequence[float]) -> dict[str, float]:
    row = model.predict_array(np.asarray(u, dtype=float)[None, :])[0]
    return {name: float(x) for name, x in zip(model.measurements, row)}


def loss(model: SurrogateModel, batch: TrainBatch) -> float:
    r = model.forward(batch.inputs) - batch.targets
    return float(np.sum(r * r) / len(r))


def loss_and_gradient(model: SurrogateModel, batch: TrainBatch) -> tuple[float, list[np.ndarray]]:
    """MSE and its exact gradient, ordered like ``model.params()``."""
    acts = [batch.inputs]
    a = batch.inputs
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i < last:
            a = np.tanh(a)
        acts.append(a)
    m = len(batch.inputs)
    r = acts[-1] - batch.targets
    value = float(np.sum(r * r) / m)

    grads: list[np.ndarray] = [None] * (2 * len(model.weights))
    delta = (2.0 / m) * r
    for i in range(last, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return value, grads


def gradient(model: SurrogateModel, batch: TrainBatch) -> list[np.ndarray]:
    return loss_and_gradient(model, batch)[1]


def _descend(model, batch, epochs, lr, patience, min_improvement):
    """Adam on the full batch; leaves the model at the lowest-loss iterate seen."""
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    params = model.params()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    history = []
    best_params = None
    model.early_stopped = False
    done = 0
    for t in range(1, epochs + 1):
        value, grads = loss_and_gradient(model, batch)
        if not math.isfinite(value):
            return False, done
        if not history or value < history[-1]:
            best_params = [p.copy() for p in params]
        best = min(value, history[-1]) if history else value
        history.append(best)
        if len(history) > patience and history[-1 - patience] - best < min_improvement:
            model.early_stopped = True
            break
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for p, g, a, v in zip(params, grads, m1, m2):
            a *= beta1
            a += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            p -= lr * (a / c1) / (np.sqrt(v / c2) + eps)
        done = t
    if loss(model, batch) > history[-1]:
        model.set_params(best_params)
    return True, done


def train(
    model: SurrogateModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    epochs: int = 200,
    lr: float = 1e-3,
    patience: int = 20,
    min_improvement: float = 1e-8,
    rng: np.random.Generator | None = None,
) -> SurrogateModel:
    """Fit ``model`` in place on raw (un-normalized) targets and return it.

    Output normalization is refreshed from the full data before descent. A
    non-finite loss triggers one re-initialisation; a second one is fatal.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(inputs) == 0:
        raise ValueError("cannot train on an empty trajectory")
    model.refresh_normalization(targets)
    batch = TrainBatch(inputs, model.normalize_targets(targets))
    model.last_initial_loss = loss(model, batch)
    model.last_epochs = 0
    if epochs <= 0:
        model.last_final_loss = model.last_initial_loss
        return model
    rng = rng if rng is not None else np.random.default_rng(0)
    for attempt in range(2):
        # divergence is detected explicitly below, so numpy's overflow warnings are noise
        with np.errstate(over="ignore", invalid="ignore"):
            ok, done = _descend(model, batch, epochs, lr, patience, min_improvement)
            final = loss(model, batch) if ok else math.nan
        if ok and math.isfinite(final) and model.all_finite():
            model.last_final_loss = final
            model.last_epochs = done
            return model
        model.init_weights(rng)
        model.last_initial_loss = loss(model, batch)
    raise SurrogateError("surrogate training diverged twice (non-finite loss)")
