"""One-hidden-layer softmax classifier trained with plain mini-batch SGD.

Everything is float64 numpy. Parameter containers are immutable: every
operation returns a new :class:`ModelParams` and the arrays inside are
flagged read-only, so a value handed to another client or thread can't be
modified behind its back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator

import numpy as np

from .errors import ContractError, DegenerateInputWarning

if TYPE_CHECKING:
    from .dataset import LabeledSet

_FIELDS = ("hidden_weights", "hidden_bias", "output_weights", "output_bias")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Classifier weights.

    ``hidden_weights`` is (s, d), ``hidden_bias`` (s,), ``output_weights``
    (L, s) and ``output_bias`` (L,). Row ``l`` of the output layer together
    with ``output_bias[l]`` is the class-``l`` parameter unit used by the
    monitor and by carry-forward.
    """

    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: np.ndarray

    def __post_init__(self):
        for name in _FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        hw, hb, ow, ob = self.arrays()
        if hw.ndim != 2 or ow.ndim != 2 or hb.ndim != 1 or ob.ndim != 1:
            raise ContractError("weights must be matrices and biases vectors")
        s, d = hw.shape
        L = ow.shape[0]
        if hb.shape != (s,) or ow.shape != (L, s) or ob.shape != (L,):
            raise ContractError(
                f"inconsistent shapes: hidden {hw.shape}/{hb.shape}, "
                f"output {ow.shape}/{ob.shape}"
            )
        if d < 1 or s < 1 or L < 2:
            raise ContractError(f"need d>=1, s>=1, L>=2 (got d={d}, s={s}, L={L})")
        if not all(np.isfinite(a).all() for a in (hw, hb, ow, ob)):
            raise ContractError("parameters contain NaN or Inf")

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.output_weights.shape[0]

    @property
    def shape_key(self) -> tuple[int, int, int]:
        return (self.input_dim, self.hidden_width, self.num_classes)

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, name) for name in _FIELDS)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def bitwise_equal(self, other: "ModelParams") -> bool:
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays(), other.arrays())
        )

    @classmethod
    def zeros(cls, d: int, s: int, L: int) -> "ModelParams":
        return cls(np.zeros((s, d)), np.zeros(s), np.zeros((L, s)), np.zeros(L))

    @classmethod
    def from_flat(cls, like: "ModelParams", vec: np.ndarray) -> "ModelParams":
        parts, start = [], 0
        for a in like.arrays():
            parts.append(np.asarray(vec[start:start + a.size]).reshape(a.shape))
            start += a.size
        return cls(*parts)


# Gradients share the parameter layout exactly.
Gradients = ModelParams


@dataclass(frozen=True)
class ForwardTrace:
    hidden_activations: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    local_epochs: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ContractError(f"batch_size must be a positive integer, got {self.batch_size}")
        if int(self.local_epochs) != self.local_epochs or self.local_epochs < 1:
            raise ContractError(f"local_epochs must be a positive integer, got {self.local_epochs}")


def init_params(d: int, s: int, L: int, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
    rng = np.random.default_rng(seed)
    a, b = 1.0 / np.sqrt(d), 1.0 / np.sqrt(s)
    return ModelParams(
        rng.uniform(-a, a, (s, d)),
        rng.uniform(-a, a, s),
        rng.uniform(-b, b, (L, s)),
        rng.uniform(-b, b, L),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_features(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ContractError(
            f"expected features of shape (n, {params.input_dim}), got {X.shape}"
        )
    return X


def forward_batch(params: ModelParams, X: np.ndarray):
    """Return (hidden activations, logits, probabilities) for rows of ``X``."""
    X = _check_features(params, X)
    H = np.maximum(X @ params.hidden_weights.T + params.hidden_bias, 0.0)
    Z = H @ params.output_weights.T + params.output_bias
    return H, Z, softmax(Z)


def forward(params: ModelParams, x: np.ndarray) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise ContractError(f"expected a feature vector of length {params.input_dim}, got {x.shape}")
    if not np.isfinite(x).all():
        raise ContractError("feature vector contains NaN or Inf")
    H, Z, P = forward_batch(params, x[None, :])
    return ForwardTrace(H[0], Z[0], P[0])


def predict_proba(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return forward_batch(params, X)[2]


def predict(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(params, X), axis=1)


def loss(probabilities: np.ndarray, y: int) -> float:
    """Cross-entropy of one prediction."""
    p = np.asarray(probabilities, dtype=np.float64)
    if not 0 <= y < p.shape[0]:
        raise ContractError(f"class index {y} out of range for {p.shape[0]} classes")
    return float(-np.log(p[y]))


def _check_labels(params: ModelParams, y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ContractError(f"expected {n} labels, got shape {y.shape}")
    if n and (y.min() < 0 or y.max() >= params.num_classes):
        raise ContractError("label out of range")
    return y.astype(np.int64, copy=False)


def _grad_arrays(hw, hb, ow, ob, X, y):
    # Batch-mean cross-entropy gradient; ReLU subgradient at 0 is 0.
    H = np.maximum(X @ hw.T + hb, 0.0)
    P = softmax(H @ ow.T + ob)
    E = P
    E[np.arange(len(y)), y] -= 1.0
    E /= len(y)
    g_ow = E.T @ H
    g_ob = E.sum(axis=0)
    dH = E @ ow
    dH[H <= 0.0] = 0.0
    return dH.T @ X, dH.sum(axis=0), g_ow, g_ob


def backward(params: ModelParams, X: np.ndarray, y) -> Gradients:
    """Mean cross-entropy gradient over the batch ``(X, y)``."""
    X = _check_features(params, X)
    if X.shape[0] == 0:
        raise ContractError("backward needs a nonempty batch")
    y = _check_labels(params, y, X.shape[0])
    return Gradients(*_grad_arrays(*params.arrays(), X, y))


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    if lr < 0:
        raise ContractError(f"learning rate must be nonnegative, got {lr}")
    if params.shape_key != grads.shape_key:
        raise ContractError(f"gradient shape {grads.shape_key} != params shape {params.shape_key}")
    return ModelParams(*(p - lr * g for p, g in zip(params, grads)))


def train_local(params: ModelParams, labeled: "LabeledSet", cfg: TrainConfig) -> ModelParams:
    """Shuffled mini-batch SGD for ``cfg.local_epochs`` epochs.

    A pure function of its arguments: the only randomness is the batch
    order, drawn from ``cfg.rng_seed``. The trailing short batch is kept and
    averaged over its own size.
    """
    X = _check_features(params, labeled.features)
    n = X.shape[0]
    if n == 0:
        warnings.warn("train_local on an empty labeled set; parameters unchanged",
                      DegenerateInputWarning, stacklevel=2)
        return params
    y = _check_labels(params, labeled.labels, n)
    rng = np.random.default_rng(cfg.rng_seed)
    hw, hb, ow, ob = (a.copy() for a in params.arrays())
    lr, bs = cfg.learning_rate, cfg.batch_size
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            g_hw, g_hb, g_ow, g_ob = _grad_arrays(hw, hb, ow, ob, X[idx], y[idx])
            hw = hw - lr * g_hw
            hb = hb - lr * g_hb
            ow = ow - lr * g_ow
            ob = ob - lr * g_ob
    return ModelParams(hw, hb, ow, ob)


def output_row(params: ModelParams, l: int) -> np.ndarray:
    """Output weights of class ``l`` with its bias appended (length s+1)."""
    if not 0 <= l < params.num_classes:
        raise ContractError(f"class index {l} out of range for {params.num_classes} classes")
    return np.append(params.output_weights[l], params.output_bias[l])


def output_rows(params: ModelParams) -> np.ndarray:
    """All class rows stacked, shape (L, s+1)."""
    return np.hstack([params.output_weights, params.output_bias[:, None]])


def set_output_row(params: ModelParams, l: int, row: np.ndarray) -> ModelParams:
    if not 0 <= l < params.num_classes:
        raise ContractError(f"class index {l} out of range for {params.num_classes} classes")
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (params.hidden_width + 1,):
        raise ContractError(f"row must have length {params.hidden_width + 1}, got {row.shape}")
    ow = params.output_weights.copy()
    ob = params.output_bias.copy()
    ow[l] = row[:-1]
    ob[l] = row[-1]
    return ModelParams(params.hidden_weights, params.hidden_bias, ow, ob)
