"""Hypergraph-convolution classifier with hand-derived gradients.

Each layer computes act(P @ X @ Theta) where P is the precomputed
propagation operator (node -> edge -> node aggregation); a sigmoid head
turns the final scalar per node into a change probability.  Training is
full-graph semi-supervised: the focal loss is summed over the labeled
nodes only, weight decay enters the loss explicitly, and the backward
pass is written out by the chain rule (P is symmetric, so its adjoint is
P itself).  Everything is float64 numpy; identical seeds give identical
results.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import ceil

import numpy as np

from .errors import DimensionError, FormatError, ParameterError, TrainingError
from .hypergraph import PropagationOperator

PROB_EPS = 1e-7  # clamp before log; the focal term is singular at p_t in {0, 1}

CHECKPOINT_MAGIC = b"DNHM"
CHECKPOINT_VERSION = 1
_ACT_CODES = {"relu": 0, "identity": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass
class Layer:
    theta: np.ndarray
    activation: str

    def __post_init__(self) -> None:
        if self.activation not in _ACT_CODES:
            raise ParameterError(f"unknown activation {self.activation!r}")
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2:
            raise DimensionError("layer parameter matrix must be 2-D")


@dataclass
class Model:
    """Layered hypergraph-convolution network with a sigmoid head.

    Attributes:
        layers: Parameter matrices with their activations; column count of
            one layer must equal the row count of the next, and the final
            layer must produce a single column (the change logit).
        dropout_rate: Inverted-dropout rate applied to layer inputs during
            training; never applied to P or to the head output.
        input_dropout: Whether the first layer's input features are also
            dropped (on by default; switch kept because the convention is
            not universal).
    """

    layers: list[Layer]
    dropout_rate: float = 0.5
    input_dropout: bool = True

    def __post_init__(self) -> None:
        if not self.layers:
            raise ParameterError("model needs at least one layer")
        if not 0 <= self.dropout_rate < 1:
            raise ParameterError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.theta.shape[1] != b.theta.shape[0]:
                raise DimensionError(
                    f"layer dimension chain broken: {a.theta.shape} -> {b.theta.shape}"
                )
        if self.layers[-1].theta.shape[1] != 1:
            raise DimensionError("final layer must output a single logit column")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].theta.shape[0]


@dataclass(frozen=True)
class LabelMask:
    """Per-node supervision: -1 unlabeled, 0 unchanged, 1 changed."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int8))

    @property
    def labeled_idx(self) -> np.ndarray:
        return np.nonzero(self.labels >= 0)[0]

    @property
    def n_labeled(self) -> int:
        return int((self.labels >= 0).sum())

    def require_both_classes(self) -> None:
        labeled = self.labels[self.labels >= 0]
        if labeled.size == 0 or (labeled == 0).sum() == 0 or (labeled == 1).sum() == 0:
            raise TrainingError("training needs at least one labeled node per class")


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the reference protocol
    (400 epochs, dropout 0.5, weight decay 5e-4, alpha 0.2, gamma 2)."""

    epochs: int = 400
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    alpha: float = 0.2
    gamma: float = 2.0
    optimizer: str = "adam"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ParameterError("learning rate must be >= 0")
        if self.weight_decay < 0:
            raise ParameterError("weight decay must be >= 0")
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ParameterError("gamma must be >= 0")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, kept for the backward pass."""

    model: Model
    op: PropagationOperator
    inputs: list[np.ndarray]  # per layer: input after dropout
    pre_acts: list[np.ndarray]  # per layer: Z = P (A Theta)
    masks: list[np.ndarray | None]  # per layer: dropout keep-mask or None
    probs: np.ndarray


def init_model(
    in_dim: int,
    hidden: int = 64,
    n_layers: int = 2,
    dropout_rate: float = 0.5,
    seed: int = 0,
) -> Model:
    """Glorot-uniform initialization of a relu chain with a scalar head."""
    if n_layers < 1:
        raise ParameterError("need at least one layer")
    dims = [in_dim] + [hidden] * (n_layers - 1) + [1]
    rng = np.random.default_rng(seed)
    layers = []
    for l in range(n_layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        theta = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        act = "relu" if l < n_layers - 1 else "identity"
        layers.append(Layer(theta, act))
    return Model(layers, dropout_rate=dropout_rate)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, 0.0) if activation == "relu" else z


def _activate_grad(z: np.ndarray, activation: str) -> np.ndarray:
    return (z > 0).astype(np.float64) if activation == "relu" else np.ones_like(z)


def conv_layer(
    op: PropagationOperator, x: np.ndarray, theta: np.ndarray, activation: str
) -> np.ndarray:
    """One hypergraph convolution: act(P @ (X @ Theta)), right to left."""
    if x.shape[1] != theta.shape[0]:
        raise DimensionError(
            f"X has {x.shape[1]} columns but Theta expects {theta.shape[0]}"
        )
    if x.shape[0] != op.n:
        raise DimensionError(f"X has {x.shape[0]} rows but P is {op.n}x{op.n}")
    return _activate(op.p @ (x @ theta), activation)


def forward(
    model: Model,
    op: PropagationOperator,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    """Run the network; training mode applies inverted dropout per layer.

    Returns the cache whose `probs` field holds the sigmoid head output.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise DimensionError(
            f"input is {x.shape}, expected (N, {model.in_dim})"
        )
    if training and model.dropout_rate > 0 and rng is None:
        raise ParameterError("training forward with dropout needs an rng")

    a = x
    inputs: list[np.ndarray] = []
    pre_acts: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []
    rate = model.dropout_rate
    for l, layer in enumerate(model.layers):
        drop = training and rate > 0 and (l > 0 or model.input_dropout)
        if drop:
            keep = rng.random(a.shape) >= rate
            a_in = a * keep / (1.0 - rate)
            masks.append(keep)
        else:
            a_in = a
            masks.append(None)
        z = op.p @ (a_in @ layer.theta)
        inputs.append(a_in)
        pre_acts.append(z)
        a = _activate(z, layer.activation)
    probs = _sigmoid(a[:, 0])
    return ForwardCache(model, op, inputs, pre_acts, masks, probs)


def predict(model: Model, op: PropagationOperator, x: np.ndarray) -> np.ndarray:
    """Inference-mode change probabilities per node."""
    return forward(model, op, x, training=False).probs


# ---------------------------------------------------------------------------
# Focal loss and gradients
# ---------------------------------------------------------------------------


def focal_loss(
    probs: np.ndarray, mask: LabelMask, alpha: float = 0.2, gamma: float = 2.0
) -> float:
    """Sum over labeled nodes of -alpha * (1 - p_t)^gamma * ln(p_t).

    p_t is the probability assigned to the node's true class; probabilities
    are clamped to [PROB_EPS, 1 - PROB_EPS] before the log.  With gamma=0
    and alpha=1 this is exactly the binary cross-entropy.
    """
    idx = mask.labeled_idx
    if idx.size == 0:
        raise TrainingError("focal loss needs at least one labeled node")
    p = np.clip(probs[idx], PROB_EPS, 1.0 - PROB_EPS)
    y = mask.labels[idx]
    pt = np.where(y == 1, p, 1.0 - p)
    return float(np.sum(-alpha * (1.0 - pt) ** gamma * np.log(pt)))


def weight_penalty(model: Model, weight_decay: float) -> float:
    """The explicit (weight_decay / 2) * sum ||Theta||^2 loss term."""
    return 0.5 * weight_decay * sum(float((l.theta**2).sum()) for l in model.layers)


def _head_grad(
    probs: np.ndarray, mask: LabelMask, alpha: float, gamma: float
) -> np.ndarray:
    """dL/d(logit) per node; zero for unlabeled nodes."""
    n = probs.shape[0]
    dz = np.zeros(n, dtype=np.float64)
    idx = mask.labeled_idx
    if idx.size == 0:
        raise TrainingError("backward needs at least one labeled node")
    p = probs[idx]
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    y = mask.labels[idx]
    pt = np.where(y == 1, pc, 1.0 - pc)
    one_m = 1.0 - pt
    if gamma == 0.0:
        dl_dpt = -alpha / pt
    else:
        dl_dpt = alpha * gamma * one_m ** (gamma - 1.0) * np.log(pt) - alpha * one_m**gamma / pt
    sign = np.where(y == 1, 1.0, -1.0)
    inside_clamp = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    dz[idx] = sign * dl_dpt * inside_clamp * p * (1.0 - p)
    return dz


def backward(cache: ForwardCache, mask: LabelMask, config: TrainConfig) -> list[np.ndarray]:
    """Exact gradients of focal loss + weight penalty w.r.t. every Theta.

    Reuses the dropout masks captured by the forward pass; the adjoint of
    the sparse aggregation is P itself (P is symmetric).
    """
    model, op = cache.model, cache.op
    grads: list[np.ndarray] = [np.empty(0)] * model.num_layers

    g = _head_grad(cache.probs, mask, config.alpha, config.gamma)[:, None]
    rate = model.dropout_rate
    for l in range(model.num_layers - 1, -1, -1):
        layer = model.layers[l]
        dz = g * _activate_grad(cache.pre_acts[l], layer.activation)
        s = op.p @ dz
        grads[l] = cache.inputs[l].T @ s + config.weight_decay * layer.theta
        if l > 0:
            g = s @ layer.theta.T
            keep = cache.masks[l]
            if keep is not None:
                g = g * keep / (1.0 - rate)
    return grads


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mh = self.m[i] / (1 - self.b1**self.t)
            vh = self.v[i] / (1 - self.b2**self.t)
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


class _Momentum:
    def __init__(self, shapes, lr, mu):
        self.lr, self.mu = lr, mu
        self.vel = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        for i, (p, g) in enumerate(zip(params, grads)):
            self.vel[i] = self.mu * self.vel[i] + g
            p -= self.lr * self.vel[i]


def train(
    model: Model,
    op: PropagationOperator,
    x: np.ndarray,
    mask: LabelMask,
    config: TrainConfig,
) -> tuple[Model, list[float]]:
    """Full-graph gradient descent for config.epochs epochs.

    The recorded history holds the pre-update training loss (focal +
    weight penalty) of every epoch.  Raises TrainingError naming the epoch
    if the loss stops being finite.
    """
    mask.require_both_classes()
    rng = np.random.default_rng(config.seed)
    shapes = [l.theta.shape for l in model.layers]
    if config.optimizer == "adam":
        opt = _Adam(shapes, config.learning_rate)
    else:
        opt = _Momentum(shapes, config.learning_rate, config.momentum)

    params = [l.theta for l in model.layers]
    history: list[float] = []
    for epoch in range(config.epochs):
        cache = forward(model, op, x, training=True, rng=rng)
        loss = focal_loss(cache.probs, mask, config.alpha, config.gamma)
        loss += weight_penalty(model, config.weight_decay)
        if not np.isfinite(loss):
            raise TrainingError(f"loss became non-finite at epoch {epoch}")
        history.append(loss)
        grads = backward(cache, mask, config)
        opt.step(params, grads)
    return model, history


def sample_labels(
    n: int,
    ratio: float,
    seed: int,
    reference: np.ndarray | None = None,
    stratified: bool = False,
    max_retries: int = 100,
) -> LabelMask:
    """Pick ceil(ratio * n) nodes uniformly and copy their true labels.

    Redraws (up to max_retries) when the sample misses a class that the
    reference contains; raises TrainingError if the reference itself is
    single-class and ratio < 1, since no redraw can fix that.
    """
    if not 0 < ratio <= 1:
        raise ParameterError(f"label ratio must be in (0, 1], got {ratio}")
    if reference is None:
        raise TrainingError("sample_labels needs per-node reference labels to copy")
    reference = np.asarray(reference, dtype=np.int8)
    if reference.shape != (n,):
        raise DimensionError(f"reference has shape {reference.shape}, expected ({n},)")
    k = ceil(ratio * n)
    rng = np.random.default_rng(seed)
    labels = np.full(n, -1, dtype=np.int8)

    if k >= n:
        labels[:] = reference
        return LabelMask(labels)

    classes = np.unique(reference)
    if stratified and len(classes) == 2:
        pos = np.nonzero(reference == 1)[0]
        neg = np.nonzero(reference == 0)[0]
        k_pos = min(len(pos), max(1, round(k * len(pos) / n)))
        k_neg = min(len(neg), k - k_pos)
        chosen = np.concatenate(
            [rng.choice(pos, size=k_pos, replace=False),
             rng.choice(neg, size=k_neg, replace=False)]
        )
        labels[chosen] = reference[chosen]
        return LabelMask(labels)

    for _ in range(max_retries):
        chosen = rng.choice(n, size=k, replace=False)
        picked = reference[chosen]
        if len(classes) < 2 or len(np.unique(picked)) == 2:
            if len(classes) < 2:
                break  # single-class reference cannot be fixed by redraws
            labels[chosen] = picked
            return LabelMask(labels)
    if len(classes) < 2:
        raise TrainingError("reference labels contain a single class")
    raise TrainingError(
        f"could not draw both classes in {max_retries} attempts (ratio {ratio})"
    )


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------


def save_checkpoint(model: Model, path: str) -> None:
    """Binary checkpoint: magic, version, layer count, then per layer
    (rows, cols, activation code, row-major float64 Theta), little-endian."""
    parts = [struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.num_layers)]
    for layer in model.layers:
        rows, cols = layer.theta.shape
        parts.append(struct.pack("<III", rows, cols, _ACT_CODES[layer.activation]))
        parts.append(np.ascontiguousarray(layer.theta, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_checkpoint(path: str) -> Model:
    """Read a checkpoint back; the loaded model carries dropout_rate 0
    (checkpoints store parameters only and are meant for inference)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    _, version, n_layers = struct.unpack_from("<4sII", raw, 0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported version {version}")
    pos = 12
    layers = []
    for _ in range(n_layers):
        if pos + 12 > len(raw):
            raise FormatError("truncated layer header")
        rows, cols, code = struct.unpack_from("<III", raw, pos)
        pos += 12
        if code not in _ACT_NAMES:
            raise FormatError(f"unknown activation code {code}")
        nbytes = rows * cols * 8
        if pos + nbytes > len(raw):
            raise FormatError("truncated layer payload")
        theta = np.frombuffer(raw[pos : pos + nbytes], dtype="<f8").reshape(rows, cols)
        pos += nbytes
        layers.append(Layer(theta.copy(), _ACT_NAMES[code]))
    if pos != len(raw):
        raise FormatError(f"trailing bytes after payload: {len(raw) - pos}")
    return Model(layers, dropout_rate=0.0)
