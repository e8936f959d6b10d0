"""Quantized softmax network: a feed-forward net with one softmax head per output site.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch of feature
rows ``(B, fan_in)`` propagates by right multiplication.  Hidden layers use
leaky ReLU; the output layer is linear with ``heads * M`` units, reshaped to
``(B, heads, M)`` logits before the per-head softmax.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from qsn.errors import ConfigurationError, NumericalError

LOG_FLOOR = np.log(1e-12)
INIT_GAIN = float(np.sqrt(6.0))


@dataclass(frozen=True)
class QSNArchitecture:
    input_dim: int
    heads: int
    bins_per_head: int = 10
    hidden_layers: tuple[int, ...] = (256, 256, 256)
    alpha: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        widths = (self.input_dim, *self.hidden_layers, self.heads, self.bins_per_head)
        if any(w < 1 for w in widths):
            raise ConfigurationError(f"all layer widths must be >= 1: {widths}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_layers, self.heads * self.bins_per_head]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QSNArchitecture":
        return cls(**{**d, "hidden_layers": tuple(d["hidden_layers"])})


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 10000
    learning_rate: float = 0.001
    batch_size: int = 64
    decay: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0 <= self.decay < 1:
            raise ConfigurationError(f"RMSProp decay must lie in [0, 1), got {self.decay}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class QSNetwork:
    arch: QSNArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ConfigurationError("layer count does not match architecture")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ConfigurationError(
                    f"layer {i}: W {W.shape}, b {b.shape} do not match sizes {sizes[i]}->{sizes[i + 1]}"
                )

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "QSNetwork":
        return QSNetwork(
            self.arch, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
            self.seed, dict(self.meta),
        )

    def to_dict(self) -> dict:
        return {
            "architecture": self.arch.to_dict(),
            "init_seed": self.seed,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            **self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QSNetwork":
        meta = {k: v for k, v in d.items() if k not in ("architecture", "init_seed", "weights", "biases")}
        return cls(
            QSNArchitecture.from_dict(d["architecture"]),
            [np.array(W, dtype=float) for W in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
            d.get("init_seed"),
            meta,
        )


def init_network(arch: QSNArchitecture, rng: np.random.Generator | None = None, zero: bool = False,
                 seed: int | None = None) -> QSNetwork:
    """Weights ~ U(-b, b) with b = sqrt(6 / fan_in) (He-uniform scale), biases zero.

    ``zero=True`` gives an all-zero network, whose pmfs are uniform.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if zero:
            W = np.zeros((fan_in, fan_out))
        else:
            bound = INIT_GAIN / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return QSNetwork(arch, weights, biases, seed)


def leaky_relu(z, alpha):
    return np.where(z > 0, z, alpha * z)


def softmax_heads(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilized by subtracting the per-head max."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_heads(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _forward_cache(net: QSNetwork, d: np.ndarray):
    d = np.asarray(d, dtype=float)
    if d.ndim == 1:
        d = d[None, :]
    if d.shape[1] != net.arch.input_dim:
        raise ConfigurationError(f"feature length {d.shape[1]} != input_dim {net.arch.input_dim}")
    a = d
    pre, acts = [], [d]
    n_layers = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W + b
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite activations in layer {i}", step=i)
        pre.append(z)
        a = z if i == n_layers - 1 else leaky_relu(z, net.arch.alpha)
        acts.append(a)
    logits = a.reshape(d.shape[0], net.arch.heads, net.arch.bins_per_head)
    return logits, pre, acts


def forward(net: QSNetwork, d) -> tuple[np.ndarray, np.ndarray]:
    """Logits and pmfs, both shaped ``(B, heads, M)`` (B = 1 for a single vector)."""
    logits, _, _ = _forward_cache(net, d)
    return logits, softmax_heads(logits)


def predict_pmf(net: QSNetwork, d) -> np.ndarray:
    return forward(net, d)[1]


def cross_entropy(logits: np.ndarray, one_hot: np.ndarray) -> float:
    """Batch mean of ``-sum_n sum_m log(rho_mn) * label_mn`` with log floored at log(1e-12)."""
    logp = np.maximum(log_softmax_heads(logits), LOG_FLOOR)
    return float(-(logp * one_hot).sum() / logits.shape[0])


def loss(net: QSNetwork, d, one_hot) -> float:
    logits, _ = forward(net, d)
    return cross_entropy(logits, np.asarray(one_hot, dtype=float))


def backward(net: QSNetwork, d, one_hot, return_loss: bool = False):
    """Gradients ``[dW0, db0, dW1, db1, ...]`` of the batch-mean cross-entropy.

    The output-layer error is ``(pmf - one_hot) / B``; it does not go through
    the floored log, so it stays exact even when a probability underflows.
    """
    one_hot = np.asarray(one_hot, dtype=float)
    logits, pre, acts = _forward_cache(net, d)
    B = logits.shape[0]
    pmf = softmax_heads(logits)
    delta = ((pmf - one_hot) / B).reshape(B, -1)
    alpha = net.arch.alpha
    grads: list[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        if i > 0:
            delta = (delta @ net.weights[i].T) * np.where(pre[i - 1] > 0, 1.0, alpha)
    grads.reverse()
    if return_loss:
        return grads, cross_entropy(logits, one_hot)
    return grads


def output_error(net: QSNetwork, d, one_hot) -> np.ndarray:
    """Per-row gradient of the row loss w.r.t. the output logits: ``pmf - one_hot``."""
    return predict_pmf(net, d) - np.asarray(one_hot, dtype=float)


@dataclass
class RMSPropState:
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: QSNetwork) -> "RMSPropState":
        return cls([np.zeros_like(p) for p in net.params])


def rmsprop_update(net: QSNetwork, grads, state: RMSPropState, config: TrainConfig):
    """In-place RMSProp step; returns ``(net, state)`` for chaining."""
    g_ = config.decay
    for p, g, v in zip(net.params, grads, state.v):
        v *= g_
        v += (1.0 - g_) * g * g
        p -= config.learning_rate * g / (np.sqrt(v) + config.epsilon)
    return net, state


def train(net: QSNetwork, fm, config: TrainConfig, rng: np.random.Generator,
          M: int | None = None, log_every: int = 0, logger=None):
    """Minibatch RMSProp on a standardized, labelled FeatureMatrix.

    Rows are sampled uniformly with replacement.  Returns ``(net, losses)``
    where ``losses[k]`` is the minibatch loss evaluated before update k.
    """
    M = net.arch.bins_per_head if M is None else M
    if fm.labels is None:
        raise ConfigurationError("feature matrix must carry bin labels")
    if fm.features.shape[1] != net.arch.input_dim or fm.labels.shape[1] != net.arch.heads:
        raise ConfigurationError("feature matrix does not match the network architecture")
    eye = np.eye(M)
    state = RMSPropState.zeros_like(net)
    losses = np.empty(config.iterations)
    n = len(fm)
    for it in range(config.iterations):
        idx = rng.integers(0, n, size=config.batch_size)
        grads, L = backward(net, fm.features[idx], eye[fm.labels[idx]], return_loss=True)
        if not np.isfinite(L):
            raise NumericalError(f"training diverged at iteration {it}", step=it)
        losses[it] = L
        rmsprop_update(net, grads, state, config)
        if logger is not None and log_every and (it + 1) % log_every == 0:
            logger.info("iteration %d/%d  loss %.4f", it + 1, config.iterations,
                        losses[max(0, it + 1 - log_every): it + 1].mean())
    return net, losses


def argmax_bins(pmf: np.ndarray) -> np.ndarray:
    """Most probable bin per head; np.argmax breaks ties at the lowest index."""
    return np.argmax(pmf, axis=-1)


def misclassification_rate(net: QSNetwork, fm, batch: int = 8192) -> np.ndarray:
    """Per-head fraction of rows whose argmax bin differs from the true bin."""
    wrong = np.zeros(net.arch.heads)
    for s in range(0, len(fm), batch):
        pred = argmax_bins(predict_pmf(net, fm.features[s: s + batch]))
        wrong += (pred != fm.labels[s: s + batch]).sum(axis=0)
    return wrong / len(fm)


def misclassification_from_pmf(pmf: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return (argmax_bins(pmf) != labels).mean(axis=0)
