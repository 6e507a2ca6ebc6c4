"""Self-contained dense-MLP engine used by both receiver refiners.

Networks are plain fully connected stacks: batch normalization on the input
(no learnable affine; the first weight layer absorbs any scale/shift), ReLU
hidden layers, linear output. Training is mini-batch Adam on a mean squared
error loss with an L2 penalty over the weight matrices only. Everything is
float64 numpy; gradients are exact analytic backpropagation and are checked
against finite differences in the test suite.
"""

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    FormatError,
    TrainingDivergenceError,
)

__all__ = [
    "MlpArchitecture",
    "MlpModel",
    "AdamOptimizer",
    "TrainingConfig",
    "TrainingHistory",
    "channel_refiner_architecture",
    "detection_refiner_architecture",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

# small enough to keep normalized batch variance within 1e-6 of one
BN_EPS = 1e-10
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("none", "relu", "linear")


@dataclass(frozen=True)
class MlpArchitecture:
    """Neurons per layer (input through output) and per-layer activations."""

    layer_sizes: tuple
    activations: tuple
    input_batch_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.layer_sizes) < 2:
            raise ConfigError("need at least an input and an output layer")
        if any(s <= 0 for s in self.layer_sizes):
            raise ConfigError("layer sizes must be positive")
        if len(self.activations) != len(self.layer_sizes):
            raise ConfigError("one activation tag per layer is required")
        unknown = set(self.activations) - set(_ACTIVATIONS)
        if unknown:
            raise ConfigError(f"unknown activation tags: {sorted(unknown)}")

    @property
    def num_weight_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


def channel_refiner_architecture(n: int) -> MlpArchitecture:
    """Channel-estimate refiner: 2n -> 2n -> 2n -> 2n, two ReLU hiddens."""
    return MlpArchitecture(
        layer_sizes=(2 * n, 2 * n, 2 * n, 2 * n),
        activations=("none", "relu", "relu", "linear"),
        input_batch_norm=True,
    )


def detection_refiner_architecture(n: int) -> MlpArchitecture:
    """Detection refiner: 2n -> 2n -> 12n -> 6n -> 2n, three ReLU hiddens."""
    return MlpArchitecture(
        layer_sizes=(2 * n, 2 * n, 12 * n, 6 * n, 2 * n),
        activations=("none", "relu", "relu", "relu", "linear"),
        input_batch_norm=True,
    )


class MlpModel:
    """Weights, biases, and input-normalization statistics of one network."""

    def __init__(self, architecture, weights, biases, bn_mean, bn_var, step_count=0):
        self.architecture = architecture
        self.weights = weights  # list of (fan_in, fan_out) float64 arrays
        self.biases = biases
        self.bn_mean = bn_mean
        self.bn_var = bn_var
        self.step_count = int(step_count)
        self._validate_shapes()

    @classmethod
    def glorot_init(cls, architecture: MlpArchitecture, seed) -> "MlpModel":
        """Glorot-uniform weights, zero biases, unit normalization stats."""
        rng = np.random.default_rng(seed)
        sizes = architecture.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(
            architecture,
            weights,
            biases,
            bn_mean=np.zeros(sizes[0]),
            bn_var=np.ones(sizes[0]),
            step_count=0,
        )

    def _validate_shapes(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != self.architecture.num_weight_layers:
            raise FormatError("weight-layer count does not match the architecture")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (sizes[i], sizes[i + 1])
            if w.shape != expected:
                raise FormatError(
                    f"weight {i} has shape {w.shape}, architecture wants {expected}"
                )
            if b.shape != (sizes[i + 1],):
                raise FormatError(f"bias {i} has shape {b.shape}")
        if self.bn_mean.shape != (sizes[0],) or self.bn_var.shape != (sizes[0],):
            raise FormatError("batch-norm statistics do not match the input width")

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.architecture,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.bn_mean.copy(),
            self.bn_var.copy(),
            self.step_count,
        )

    @property
    def num_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    # ---- forward / loss / gradients -------------------------------------

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """Pure forward pass; batch statistics in training mode, running
        statistics otherwise. Accepts a single vector or a (batch, dim) array."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self._forward_cached(np.atleast_2d(x), training)[0]
        return out[0] if single else out

    def _forward_cached(self, x: np.ndarray, training: bool):
        if x.shape[1] != self.architecture.input_dim:
            raise DimensionError(
                f"input width {x.shape[1]} != network input {self.architecture.input_dim}"
            )
        cache = {"x": x}
        h = x
        if self.architecture.input_batch_norm:
            if training:
                mu = h.mean(axis=0)
                var = h.var(axis=0)
            else:
                mu, var = self.bn_mean, self.bn_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            h = (h - mu) * inv_std
            cache["bn"] = (h, inv_std)
        layer_inputs, preacts = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            layer_inputs.append(h)
            z = h @ w + b
            preacts.append(z)
            h = np.maximum(z, 0.0) if self.architecture.activations[i + 1] == "relu" else z
        cache["layer_inputs"] = layer_inputs
        cache["preacts"] = preacts
        return h, cache

    def loss(
        self,
        x: np.ndarray,
        labels: np.ndarray,
        l2_coeff: float,
        training: bool = False,
    ) -> float:
        """Mean-over-batch squared error plus l2_coeff * sum ||W||_F^2."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        labels = np.atleast_2d(np.asarray(labels, dtype=float))
        out = self._forward_cached(x, training)[0]
        return self._loss_from_output(out, labels, l2_coeff)

    def _loss_from_output(self, out, labels, l2_coeff) -> float:
        if out.shape != labels.shape:
            raise DimensionError(
                f"output shape {out.shape} != label shape {labels.shape}"
            )
        data = float(np.sum((out - labels) ** 2)) / out.shape[0]
        reg = l2_coeff * sum(float(np.sum(w**2)) for w in self.weights)
        return data + reg

    def gradients(self, x: np.ndarray, labels: np.ndarray, l2_coeff: float):
        """Loss and exact gradients for one batch (training-mode forward).

        Returns (loss, grad_weights, grad_biases, grad_inputs); the input
        gradient includes the batch-statistics path through the input
        normalization.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        labels = np.atleast_2d(np.asarray(labels, dtype=float))
        out, cache = self._forward_cached(x, training=True)
        loss = self._loss_from_output(out, labels, l2_coeff)

        batch = x.shape[0]
        delta = 2.0 * (out - labels) / batch
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            if self.architecture.activations[i + 1] == "relu":
                delta = delta * (cache["preacts"][i] > 0)
            grad_w[i] = cache["layer_inputs"][i].T @ delta + 2.0 * l2_coeff * self.weights[i]
            grad_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        if self.architecture.input_batch_norm:
            normed, inv_std = cache["bn"]
            delta = (
                inv_std
                / batch
                * (
                    batch * delta
                    - delta.sum(axis=0)
                    - normed * np.sum(delta * normed, axis=0)
                )
            )
        return loss, grad_w, grad_b, delta

    def update_bn_stats(self, x: np.ndarray, momentum: float):
        """Fold one batch into the running input statistics."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self.bn_mean = momentum * self.bn_mean + (1.0 - momentum) * x.mean(axis=0)
        self.bn_var = momentum * self.bn_var + (1.0 - momentum) * x.var(axis=0)


class AdamOptimizer:
    """Bias-corrected Adam over a flat list of parameter arrays."""

    def __init__(self, learning_rate, beta1=0.99, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m = None
        self._v = None

    def step(self, params, grads):
        """One in-place update; params and grads are parallel array lists."""
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g**2
            p -= self.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + self.epsilon)


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer and loop settings (defaults follow the reference setup)."""

    learning_rate: float = 1e-4
    beta1: float = 0.99
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 80
    l2_coeff: float = 1e-5
    epochs: int = 10
    bn_momentum: float = 0.99
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ConfigError("learning rate and epsilon must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2 (input batch norm)")
        if self.epochs < 1:
            raise ConfigError("need at least one epoch")


@dataclass
class TrainingHistory:
    """Per-epoch loss curves and the best-validation bookkeeping."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = np.inf


def train(
    model: MlpModel,
    train_inputs: np.ndarray,
    train_labels: np.ndarray,
    val_inputs: np.ndarray,
    val_labels: np.ndarray,
    config: TrainingConfig,
) -> tuple[MlpModel, TrainingHistory]:
    """Shuffled mini-batch training; returns the minimum-validation snapshot.

    The recorded training loss is the mean of the mini-batch losses of the
    epoch; the validation loss evaluates the same objective on the held-out
    set with inference-mode normalization.
    """
    train_inputs = np.asarray(train_inputs, dtype=float)
    train_labels = np.asarray(train_labels, dtype=float)
    for name, arr in (("train", train_inputs), ("validation", val_inputs)):
        if np.asarray(arr).shape[1] != model.architecture.input_dim:
            raise DimensionError(f"{name} inputs do not match the network width")
    rng = np.random.default_rng(config.shuffle_seed)
    optimizer = AdamOptimizer(
        config.learning_rate, config.beta1, config.beta2, config.epsilon
    )
    history = TrainingHistory()
    best = model.copy()
    num = train_inputs.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(num)
        batch_losses = []
        for start in range(0, num, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue  # a singleton batch has no usable batch statistics
            xb, yb = train_inputs[idx], train_labels[idx]
            model.update_bn_stats(xb, config.bn_momentum)
            loss, grad_w, grad_b, _ = model.gradients(xb, yb, config.l2_coeff)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite loss at step {model.step_count + 1}"
                )
            optimizer.step(model.weights + model.biases, grad_w + grad_b)
            model.step_count += 1
            batch_losses.append(loss)
        for w in model.weights:
            if not np.all(np.isfinite(w)):
                raise TrainingDivergenceError(
                    f"non-finite weights after epoch {epoch}"
                )
        val = model.loss(val_inputs, val_labels, config.l2_coeff, training=False)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(float(val))
        if val < history.best_val_loss:
            history.best_val_loss = float(val)
            history.best_epoch = epoch
            best = model.copy()
    return best, history


# ---- checkpoint container ------------------------------------------------


def save_checkpoint(model: MlpModel, path, config_hash: str = ""):
    """Write a self-describing .npz: version, architecture, tensors, stats."""
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "architecture_json": np.array(
            json.dumps(
                {
                    "layer_sizes": list(model.architecture.layer_sizes),
                    "activations": list(model.architecture.activations),
                    "input_batch_norm": model.architecture.input_batch_norm,
                }
            )
        ),
        "bn_mean": model.bn_mean,
        "bn_var": model.bn_var,
        "step_count": np.array(model.step_count),
        "config_hash": np.array(config_hash),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = np.ascontiguousarray(w, dtype=np.float64)
        arrays[f"b{i}"] = np.ascontiguousarray(b, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, expected_architecture: MlpArchitecture = None) -> MlpModel:
    """Read a checkpoint back; rejects corrupt files and shape mismatches."""
    try:
        with np.load(path, allow_pickle=False) as data:
            payload = {k: data[k] for k in data.files}
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, io.UnsupportedOperation) as exc:
        raise FormatError(f"unreadable checkpoint {path}: {exc}") from exc
    try:
        version = int(payload["format_version"])
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        meta = json.loads(str(payload["architecture_json"]))
        arch = MlpArchitecture(
            layer_sizes=tuple(meta["layer_sizes"]),
            activations=tuple(meta["activations"]),
            input_batch_norm=bool(meta["input_batch_norm"]),
        )
        weights = [payload[f"w{i}"] for i in range(arch.num_weight_layers)]
        biases = [payload[f"b{i}"] for i in range(arch.num_weight_layers)]
        model = MlpModel(
            arch,
            weights,
            biases,
            bn_mean=payload["bn_mean"],
            bn_var=payload["bn_var"],
            step_count=int(payload["step_count"]),
        )
    except KeyError as exc:
        raise FormatError(f"checkpoint {path} is missing field {exc}") from exc
    if expected_architecture is not None and arch != expected_architecture:
        raise FormatError(
            "checkpoint architecture mismatch: expected layer sizes "
            f"{expected_architecture.layer_sizes}, found {arch.layer_sizes}"
        )
    return model
