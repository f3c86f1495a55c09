"""Feedforward networks from scratch.

Plain numpy multilayer perceptrons with explicit forward/backward passes, so
gradients stay checkable against finite differences, plus minibatch trainers
(vanilla SGD with momentum, and Adam) and a scikit-learn style classifier
wrapper.  Checkpoints are JSON payloads; floats survive the round trip
bit for bit, so a reloaded model reproduces its predictions exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import DataError


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or failed to make progress."""


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    raise ValueError(f"unknown activation {name!r}")


class MLP:
    """A stack of dense layers with per-layer activations."""

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        activations: Sequence[str],
    ) -> None:
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("weights, biases and activations must align")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = list(activations)

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: str = "tanh",
        output_activation: str = "identity",
    ) -> "MLP":
        """Random network for the given layer sizes (inputs first)."""
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        weights, biases, acts = [], [], []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            scale = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
            acts.append(hidden_activation if i < len(sizes) - 2 else output_activation)
        return cls(weights, biases, acts)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    def forward(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(X)
        return out

    def forward_cached(self, X: np.ndarray) -> tuple[np.ndarray, dict]:
        a = np.atleast_2d(np.asarray(X, dtype=np.float64))
        activations = [a]
        pre = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            a = _activate(act, z)
            pre.append(z)
            activations.append(a)
        return a, {"pre": pre, "act": activations}

    def backward(
        self, dout: np.ndarray, cache: Mapping
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss w.r.t. weights and biases.

        ``dout`` is the loss gradient at the network output for the batch
        that produced ``cache``.
        """
        pre, acts = cache["pre"], cache["act"]
        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        delta = np.asarray(dout, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta * _activate_grad(self.activations[i], pre[i], acts[i + 1])
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
        return grads_w, grads_b

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy_from(self, other: "MLP") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs

    def clone(self) -> "MLP":
        return MLP(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": list(self.activations),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "MLP":
        return cls(
            [np.asarray(w, dtype=np.float64) for w in payload["weights"]],
            [np.asarray(b, dtype=np.float64) for b in payload["biases"]],
            [str(a) for a in payload["activations"]],
        )


class SGD:
    """Plain stochastic gradient descent with optional momentum."""

    def __init__(self, params: Sequence[np.ndarray], lr: float, momentum: float = 0.0) -> None:
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        for p, g, v in zip(self.params, grads, self.velocity):
            v *= self.momentum
            v -= self.lr * g
            p += v


class Adam:
    """Adam with bias correction."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(name: str, params: Sequence[np.ndarray], lr: float, momentum: float = 0.9):
    if name == "sgd":
        return SGD(params, lr=lr, momentum=momentum)
    if name == "adam":
        return Adam(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy and its gradient w.r.t. the logits."""
    probs = softmax(logits)
    n = logits.shape[0]
    picked = np.clip(probs[np.arange(n), labels], 1e-12, None)
    loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def train_classifier(
    net: MLP,
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    lr: float = 0.01,
    epochs: int = 200,
    batch_size: int = 32,
    optimizer: str = "adam",
    momentum: float = 0.9,
    target_train_accuracy: float | None = None,
) -> list[float]:
    """Minibatch cross-entropy training; returns the per-epoch loss curve."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    opt = make_optimizer(optimizer, net.parameters(), lr=lr, momentum=momentum)
    losses: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits, cache = net.forward_cached(X[idx])
            loss, dlogits = cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}")
            gw, gb = net.backward(dlogits, cache)
            opt.step([*gw, *gb])
            epoch_loss += loss * len(idx)
        losses.append(epoch_loss / n)
        if target_train_accuracy is not None:
            pred = np.argmax(net.forward(X), axis=1)
            if float((pred == y).mean()) >= target_train_accuracy:
                break
    return losses


class NeuralClassifier(BaseEstimator, ClassifierMixin):
    """Multiclass classifier over a from-scratch network.

    Continuous features are min-max scaled to [0, 1] using the training
    ranges; the scaling is part of the fitted model, so callers always pass
    raw values.
    """

    def __init__(
        self,
        hidden_layer_sizes: tuple[int, ...] = (16,),
        activation: str = "tanh",
        lr: float = 0.01,
        epochs: int = 200,
        batch_size: int = 32,
        optimizer: str = "adam",
        momentum: float = 0.9,
        target_train_accuracy: float | None = None,
        seed: int = 0,
    ) -> None:
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.momentum = momentum
        self.target_train_accuracy = target_train_accuracy
        self.seed = seed

    def fit(self, X, y) -> "NeuralClassifier":
        X, y = check_X_y(X, y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise DataError("classifier needs at least two classes")
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span[span == 0.0] = 1.0
        self.norm_lo_ = lo
        self.norm_span_ = span
        rng = np.random.default_rng(self.seed)
        sizes = [X.shape[1], *self.hidden_layer_sizes, len(self.classes_)]
        self.net_ = MLP.create(sizes, rng, hidden_activation=self.activation)
        self.loss_curve_ = train_classifier(
            self.net_,
            (X - lo) / span,
            y_idx,
            rng,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            momentum=self.momentum,
            target_train_accuracy=self.target_train_accuracy,
        )
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        X = check_array(X)
        return self.net_.forward((X - self.norm_lo_) / self.norm_span_)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class ClassifierOracle:
    """Adapts a fitted classifier to the actuator-decision contract.

    The classifier acts as a single actuator named after the target state;
    its per-class scores are the preference vector, and a decision is the
    class value at the argmax (first index on ties, matching ``predict``).
    """

    def __init__(
        self,
        classifier: NeuralClassifier,
        input_names: Sequence[str],
        target_name: str,
    ) -> None:
        check_is_fitted(classifier, "net_")
        self.classifier = classifier
        self.input_names = tuple(input_names)
        self.target_name = target_name

    @property
    def actuators(self) -> tuple[str, ...]:
        return (self.target_name,)

    def _vector(self, sample: Mapping[str, float]) -> np.ndarray:
        return np.array([[float(sample[n]) for n in self.input_names]], dtype=np.float64)

    def q_values(self, sample: Mapping[str, float]) -> dict[str, np.ndarray]:
        return {self.target_name: self.classifier.decision_function(self._vector(sample))[0]}

    def decide(self, sample: Mapping[str, float]) -> dict[str, float]:
        scores = self.q_values(sample)[self.target_name]
        return {self.target_name: float(self.classifier.classes_[int(np.argmax(scores))])}

    def to_dict(self) -> dict:
        return {
            "kind": "classifier",
            "input_names": list(self.input_names),
            "target_name": self.target_name,
            "params": {
                "hidden_layer_sizes": list(self.classifier.hidden_layer_sizes),
                "activation": self.classifier.activation,
                "lr": self.classifier.lr,
                "epochs": self.classifier.epochs,
                "batch_size": self.classifier.batch_size,
                "optimizer": self.classifier.optimizer,
                "momentum": self.classifier.momentum,
                "seed": self.classifier.seed,
            },
            "classes": self.classifier.classes_.tolist(),
            "norm_lo": self.classifier.norm_lo_.tolist(),
            "norm_span": self.classifier.norm_span_.tolist(),
            "net": self.classifier.net_.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ClassifierOracle":
        params = dict(payload["params"])
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        clf = NeuralClassifier(**params)
        clf.classes_ = np.asarray(payload["classes"], dtype=np.float64)
        clf.norm_lo_ = np.asarray(payload["norm_lo"], dtype=np.float64)
        clf.norm_span_ = np.asarray(payload["norm_span"], dtype=np.float64)
        clf.net_ = MLP.from_dict(payload["net"])
        clf.loss_curve_ = []
        return cls(clf, payload["input_names"], payload["target_name"])
