"""Small fully connected classifier used as the model under explanation.

ReLU hidden layers, always a softmax head (also for 2 classes), exact
backpropagated gradients with respect to the input. Everything is plain
numpy and deterministic given a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FeatureSchema, Standardizer

MODEL_FORMAT = "able-model/1"


class TrainingDiverged(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4
    hidden: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


class MlpClassifier:
    """Feed-forward ReLU network with a softmax output layer.

    A trained instance is immutable in practice: predictions and gradients
    never mutate state, so concurrent readers are safe.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching, non-empty weight/bias lists")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError("layer shapes inconsistent")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @classmethod
    def init_random(cls, layer_dims: list[int], seed: int) -> "MlpClassifier":
        """Glorot-uniform initialization: U(+-sqrt(6/(fan_in+fan_out)))."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return x

    def _forward(self, x2d: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Forward pass; returns hidden pre-activations and final logits."""
        pre_acts = []
        a = x2d
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w + b
            pre_acts.append(z)
            a = np.maximum(z, 0.0)
        logits = a @ self.weights[-1] + self.biases[-1]
        return pre_acts, logits

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        single = x.ndim == 1
        _, z = self._forward(np.atleast_2d(x))
        return z[0] if single else z

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        z = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def predict_label(self, x: np.ndarray):
        """Argmax class; ties resolve to the lower class index."""
        z = self.logits(x)
        labels = np.argmax(z, axis=-1)
        return int(labels) if np.isscalar(labels) or labels.ndim == 0 else labels

    def hidden_preactivations(self, x: np.ndarray) -> list[np.ndarray]:
        x = self._check_input(x)
        single = x.ndim == 1
        pre, _ = self._forward(np.atleast_2d(x))
        return [p[0] if single else p for p in pre]

    def input_gradient(self, x: np.ndarray, target_class: int, mode: str = "loss") -> np.ndarray:
        """Exact gradient w.r.t. the input of either the cross-entropy loss
        for `target_class` (mode="loss") or that class's raw logit
        (mode="logit")."""
        x = self._check_input(x)
        if x.ndim != 1:
            raise ValueError("input_gradient expects a single feature vector")
        if not 0 <= target_class < self.num_classes:
            raise ValueError(f"class index {target_class} out of range")
        if mode not in ("loss", "logit"):
            raise ValueError(f"unknown gradient mode {mode!r}")
        x2d = x[None, :]
        pre_acts, logits = self._forward(x2d)
        onehot = np.zeros(self.num_classes)
        onehot[target_class] = 1.0
        if mode == "logit":
            delta = onehot[None, :]
        else:
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            delta = p - onehot[None, :]
        # backpropagate through the linear layers and ReLU masks
        grad = delta @ self.weights[-1].T
        for w, z in zip(reversed(self.weights[:-1]), reversed(pre_acts)):
            grad = (grad * (z > 0)) @ w.T
        return grad[0]


def _accuracy(model: MlpClassifier, ds: Dataset) -> float:
    return float(np.mean(model.predict_label(ds.x) == ds.y))


def train_mlp(train: Dataset, val: Dataset, cfg: TrainConfig) -> MlpClassifier:
    """Mini-batch gradient descent on softmax cross-entropy.

    Returns the weight snapshot with the best validation accuracy seen over
    the epochs. Fully reproducible from cfg.seed. Raises TrainingDiverged if
    the loss goes non-finite.
    """
    if train.num_classes != val.num_classes:
        raise ValueError("train and validation sets disagree on the number of classes")
    d, c = train.n_features, train.num_classes
    model = MlpClassifier.init_random([d, *cfg.hidden, c], seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    best_acc = -1.0
    best = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])

    n = train.n_rows
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = train.x[idx], train.y[idx]
            pre_acts, logits = model._forward(xb)
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            loss = -np.mean(np.log(p[np.arange(len(yb)), yb] + 1e-300))
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    "training loss became non-finite; try a smaller learning rate"
                )
            delta = p
            delta[np.arange(len(yb)), yb] -= 1.0
            delta /= len(yb)
            # gradients layer by layer, starting from the softmax head
            activations = [xb]
            for zpre in pre_acts:
                activations.append(np.maximum(zpre, 0.0))
            grad = delta
            for li in range(len(model.weights) - 1, -1, -1):
                gw = activations[li].T @ grad + cfg.l2 * model.weights[li]
                gb = grad.sum(axis=0)
                if li > 0:
                    grad = (grad @ model.weights[li].T) * (pre_acts[li - 1] > 0)
                model.weights[li] -= cfg.learning_rate * gw
                model.biases[li] -= cfg.learning_rate * gb
        acc = _accuracy(model, val)
        if acc > best_acc:
            best_acc = acc
            best = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])
    return MlpClassifier(*best)


@dataclass
class ModelBundle:
    """A trained classifier together with its preprocessing state."""

    model: MlpClassifier
    standardizer: Standardizer
    schema: FeatureSchema
    num_classes: int = field(default=0)

    def __post_init__(self):
        if self.num_classes == 0:
            self.num_classes = self.model.num_classes

    def save(self, path: str) -> None:
        payload = {
            "format": MODEL_FORMAT,
            "layer_dims": self.model.layer_dims,
            "weights": [w.tolist() for w in self.model.weights],
            "biases": [b.tolist() for b in self.model.biases],
            "standardizer": self.standardizer.to_dict(),
            "schema": self.schema.to_dict(),
            "num_classes": self.num_classes,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str) -> "ModelBundle":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        tag = payload.get("format")
        if tag != MODEL_FORMAT:
            raise ModelFormatError(f"unsupported model format {tag!r}, expected {MODEL_FORMAT!r}")
        model = MlpClassifier(
            [np.asarray(w, dtype=float) for w in payload["weights"]],
            [np.asarray(b, dtype=float) for b in payload["biases"]],
        )
        return cls(
            model=model,
            standardizer=Standardizer.from_dict(payload["standardizer"]),
            schema=FeatureSchema.from_dict(payload["schema"]),
            num_classes=int(payload["num_classes"]),
        )
