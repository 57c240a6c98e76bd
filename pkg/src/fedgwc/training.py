"""Local client optimization on small differentiable models and server-side
aggregation rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError
from .rewards import LossTrace


@dataclass(frozen=True)
class ClientDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.intp)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ShapeError(f"features {X.shape} and labels {y.shape} do not match")
        if y.size and y.min() < 0:
            raise ShapeError("labels must be non-negative class indices")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_k(self) -> int:
        return int(self.labels.size)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class SoftmaxRegression:
    """Multinomial logistic regression; parameters are ``[W.ravel(), b]``."""

    def __init__(self, n_features: int, n_classes: int):
        self.d = n_features
        self.C = n_classes

    @property
    def n_params(self) -> int:
        return self.d * self.C + self.C

    def unpack(self, theta):
        W = theta[: self.d * self.C].reshape(self.d, self.C)
        return W, theta[self.d * self.C :]

    def init(self, rng) -> np.ndarray:
        return np.zeros(self.n_params)

    def logits(self, theta, X):
        W, b = self.unpack(theta)
        return X @ W + b

    def loss_grad(self, theta, X, y):
        """Mean cross-entropy over the batch and its gradient."""
        W, b = self.unpack(theta)
        logp = _log_softmax(X @ W + b)
        n = X.shape[0]
        loss = -logp[np.arange(n), y].mean()
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        return loss, np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])

    def predict(self, theta, X):
        return np.argmax(self.logits(theta, X), axis=1)


class MLP:
    """One hidden tanh layer; parameters are ``[W1, b1, W2, b2]`` flattened."""

    def __init__(self, n_features: int, n_classes: int, hidden: int = 32):
        self.d = n_features
        self.C = n_classes
        self.h = hidden

    @property
    def n_params(self) -> int:
        return self.d * self.h + self.h + self.h * self.C + self.C

    def unpack(self, theta):
        d, h, C = self.d, self.h, self.C
        i = 0
        W1 = theta[i : i + d * h].reshape(d, h)
        i += d * h
        b1 = theta[i : i + h]
        i += h
        W2 = theta[i : i + h * C].reshape(h, C)
        i += h * C
        return W1, b1, W2, theta[i : i + C]

    def init(self, rng) -> np.ndarray:
        W1 = rng.normal(scale=1.0 / math.sqrt(self.d), size=(self.d, self.h))
        W2 = rng.normal(scale=1.0 / math.sqrt(self.h), size=(self.h, self.C))
        return np.concatenate([W1.ravel(), np.zeros(self.h), W2.ravel(), np.zeros(self.C)])

    def logits(self, theta, X):
        W1, b1, W2, b2 = self.unpack(theta)
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def loss_grad(self, theta, X, y):
        W1, b1, W2, b2 = self.unpack(theta)
        H = np.tanh(X @ W1 + b1)
        logp = _log_softmax(H @ W2 + b2)
        n = X.shape[0]
        loss = -logp[np.arange(n), y].mean()
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        dH = (delta @ W2.T) * (1.0 - H**2)
        grad = np.concatenate([(X.T @ dH).ravel(), dH.sum(axis=0), (H.T @ delta).ravel(), delta.sum(axis=0)])
        return loss, grad

    def predict(self, theta, X):
        return np.argmax(self.logits(theta, X), axis=1)


def build_model(name: str, n_features: int, n_classes: int, hidden: int = 32):
    if name == "softmax":
        return SoftmaxRegression(n_features, n_classes)
    if name == "mlp":
        return MLP(n_features, n_classes, hidden)
    raise ConfigError(f"unknown model {name!r}; expected 'softmax' or 'mlp'")


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 0.01
    weight_decay: float = 4e-4
    batch_size: int = 64
    local_epochs: int = 1
    prox_mu: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1 or self.local_epochs < 1:
            raise ConfigError("batch_size and local_epochs must be positive")
        if self.prox_mu < 0:
            raise ConfigError(f"prox_mu must be non-negative, got {self.prox_mu}")

    def local_iterations(self, n_k: int) -> int:
        return self.local_epochs * math.ceil(n_k / self.batch_size)


def objective(model, theta, X, y, prox_mu=0.0, anchor=None):
    """Cross-entropy plus the optional proximal term ``mu/2 ||theta - anchor||^2``.

    Returns ``(value, gradient)``.
    """
    loss, grad = model.loss_grad(theta, X, y)
    if prox_mu > 0:
        diff = theta - anchor
        loss = loss + 0.5 * prox_mu * float(diff @ diff)
        grad = grad + prox_mu * diff
    return loss, grad


def local_train(model, params, data: ClientDataset, cfg: TrainerConfig, seed, client_id=None):
    """Mini-batch SGD from ``params`` on one client's data.

    The cross-entropy of each batch is recorded before its step, so the
    first entry of the trace is the loss of the broadcast model. Weight
    decay enters the step as ``wd * theta``; with ``prox_mu > 0`` the
    proximal pull towards ``params`` is added to the objective.
    Returns ``(new_params, LossTrace)``.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (model.n_params,):
        raise ShapeError(f"model expects {model.n_params} parameters, got {params.shape}")
    rng = np.random.default_rng(seed)
    theta = params.copy()
    n = data.n_k
    losses = []
    # overflow is caught below and reported as a DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.local_epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                X, y = data.features[batch], data.labels[batch]
                loss, grad = model.loss_grad(theta, X, y)
                if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                    raise DivergenceError(f"non-finite loss during local training of client {client_id!r}")
                losses.append(loss)
                if cfg.prox_mu > 0:
                    grad = grad + cfg.prox_mu * (theta - params)
                if cfg.weight_decay > 0:
                    grad = grad + cfg.weight_decay * theta
                theta = theta - cfg.learning_rate * grad
    if not np.all(np.isfinite(theta)):
        raise DivergenceError(f"parameters of client {client_id!r} became non-finite")
    return theta, LossTrace(client_id, np.array(losses))


def evaluate(model, params, data: ClientDataset):
    return model.predict(params, data.features)


AGGREGATORS = ("fedavg", "fairavg", "fedavgm", "fedprox")


@dataclass
class ServerState:
    """Server-side optimizer state; only FedAvgM uses the momentum buffer."""

    momentum: float = 0.0
    buffer: np.ndarray = None

    def copy(self) -> "ServerState":
        return ServerState(self.momentum, None if self.buffer is None else self.buffer.copy())


def _weighted_mean(params, weights):
    # anchored on the first update so identical inputs come back bit-exact
    base = params[0]
    out = base.copy()
    for p, w in zip(params[1:], weights[1:]):
        out += w * (p - base)
    return out


def aggregate(updates, method: str = "fedavg", server_state: ServerState = None, current=None) -> np.ndarray:
    """Combine client models ``[(params, n_k), ...]`` into a new server model.

    ``fedavg`` and ``fedprox`` weight by sample count, ``fairavg`` weights
    uniformly. ``fedavgm`` applies server momentum on top of the FedAvg
    step ``current - fedavg``, updating ``server_state.buffer``; it needs
    ``current``, the model broadcast this round.
    """
    if method not in AGGREGATORS:
        raise ConfigError(f"unknown aggregator {method!r}; expected one of {AGGREGATORS}")
    if not updates:
        raise ShapeError("nothing to aggregate")
    params = [np.asarray(p, dtype=np.float64) for p, _ in updates]
    if len({p.shape for p in params}) != 1:
        raise ShapeError("client models have different dimensions")
    if method == "fairavg":
        weights = np.full(len(params), 1.0 / len(params))
    else:
        n = np.array([nk for _, nk in updates], dtype=np.float64)
        weights = n / n.sum()
    avg = _weighted_mean(params, weights)
    if method != "fedavgm":
        return avg

    if current is None:
        raise ShapeError("fedavgm needs the current server model")
    state = server_state if server_state is not None else ServerState()
    old = state.buffer if state.buffer is not None else np.zeros_like(avg)
    state.buffer = state.momentum * old + (current - avg)
    # same as current - buffer, written so momentum 0 reproduces fedavg exactly
    return avg - state.momentum * old
