"""Fully connected regression network trained with Adam on mean squared error.

Each hidden layer is linear -> batch norm -> ReLU -> inverted dropout;
the output layer is linear. Forward, backward (including the batch-norm
batch-statistics terms), and the optimizer are implemented directly on
numpy arrays, which keeps training bit-reproducible for a given seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import TrainingDivergedError


@dataclass(frozen=True)
class FcnnConfig:
    """Architecture and training hyperparameters."""

    input_dim: int = 14
    hidden: tuple[int, ...] = (50, 50, 50)
    output_dim: int = 1
    dropout_rate: float = 0.2
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    normalize_inputs: bool = True

    def validate(self) -> None:
        problems = []
        if self.input_dim < 1:
            problems.append(f"input_dim={self.input_dim} must be positive")
        if self.output_dim < 1:
            problems.append(f"output_dim={self.output_dim} must be positive")
        if any(h < 1 for h in self.hidden):
            problems.append(f"hidden={self.hidden} must be positive sizes")
        if not (0.0 <= self.dropout_rate < 1.0):
            problems.append(f"dropout_rate={self.dropout_rate} must be in [0, 1)")
        if self.learning_rate <= 0.0:
            problems.append("learning_rate must be positive")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2 (batch norm needs variance)")
        if self.max_epochs < 1:
            problems.append("max_epochs must be >= 1")
        if not (1 <= self.patience <= self.max_epochs):
            problems.append("patience must be in [1, max_epochs]")
        if problems:
            raise ValueError("invalid network config: " + "; ".join(problems))


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = math.inf
    stopped_early: bool = False

    def write_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_mse,val_mse"]
        lines += [f"{r.epoch},{r.train_mse!r},{r.val_mse!r}" for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class FcnnModel:
    """Network parameters plus batch-norm running statistics.

    Parameters live in ``params`` (keys like ``"h0.W"``, ``"out.b"``)
    and non-trained state in ``buffers`` (running mean/variance per
    hidden layer). ``input_mean``/``input_std`` hold the z-scoring of
    raw inputs fitted on the training fold.
    """

    def __init__(self, config: FcnnConfig):
        config.validate()
        self.config = config
        self.mode = "train"
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.input_mean = np.zeros(config.input_dim)
        self.input_std = np.ones(config.input_dim)

        rng = np.random.default_rng([config.seed, 0])
        dims = [config.input_dim, *config.hidden, config.output_dim]
        for i in range(len(config.hidden)):
            self._init_linear(rng, f"h{i}", dims[i], dims[i + 1])
            width = dims[i + 1]
            self.params[f"h{i}.gamma"] = np.ones(width)
            self.params[f"h{i}.beta"] = np.zeros(width)
            self.buffers[f"h{i}.running_mean"] = np.zeros(width)
            self.buffers[f"h{i}.running_var"] = np.ones(width)
        self._init_linear(rng, "out", dims[-2], dims[-1])

    def _init_linear(self, rng: np.random.Generator, name: str,
                     fan_in: int, fan_out: int) -> None:
        bound = 1.0 / math.sqrt(fan_in)
        self.params[f"{name}.W"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        self.params[f"{name}.b"] = rng.uniform(-bound, bound, size=fan_out)

    @property
    def n_hidden(self) -> int:
        return len(self.config.hidden)

    # ---------------------------------------------------------------- forward

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.input_mean) / self.input_std

    def _forward_eval(self, x: np.ndarray) -> np.ndarray:
        a = self._normalize(x)
        eps = self.config.bn_eps
        for i in range(self.n_hidden):
            z = a @ self.params[f"h{i}.W"] + self.params[f"h{i}.b"]
            zhat = (z - self.buffers[f"h{i}.running_mean"]) / np.sqrt(
                self.buffers[f"h{i}.running_var"] + eps
            )
            a = np.maximum(self.params[f"h{i}.gamma"] * zhat
                           + self.params[f"h{i}.beta"], 0.0)
        return a @ self.params["out.W"] + self.params["out.b"]

    def _forward_train(
        self, x: np.ndarray, masks: Sequence[np.ndarray] | None
    ) -> tuple[np.ndarray, dict]:
        """Training-mode forward returning the cache backward() needs.

        Does not touch the running statistics; the training loop applies
        them from the cache so that gradient evaluation stays pure.
        """
        if x.shape[0] < 2:
            raise ValueError("training-mode forward needs a batch of at least 2")
        eps = self.config.bn_eps
        keep = 1.0 - self.config.dropout_rate
        a = self._normalize(x)
        cache: dict = {"layers": [], "x_norm": a}
        for i in range(self.n_hidden):
            z = a @ self.params[f"h{i}.W"] + self.params[f"h{i}.b"]
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            invstd = 1.0 / np.sqrt(var + eps)
            zhat = (z - mu) * invstd
            bn_out = self.params[f"h{i}.gamma"] * zhat + self.params[f"h{i}.beta"]
            r = np.maximum(bn_out, 0.0)
            if self.config.dropout_rate > 0.0:
                mask = masks[i]
                out = r * mask / keep
            else:
                mask = None
                out = r
            cache["layers"].append({
                "a_in": a, "mu": mu, "var": var, "invstd": invstd,
                "zhat": zhat, "bn_out": bn_out, "mask": mask,
            })
            a = out
        cache["a_last"] = a
        pred = a @ self.params["out.W"] + self.params["out.b"]
        return pred, cache

    def draw_dropout_masks(self, batch_size: int,
                           rng: np.random.Generator) -> list[np.ndarray] | None:
        if self.config.dropout_rate == 0.0:
            return None
        keep = 1.0 - self.config.dropout_rate
        return [rng.random((batch_size, h)) < keep for h in self.config.hidden]

    def forward(
        self,
        x: np.ndarray,
        mode: str | None = None,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Run the network on a batch.

        Train mode uses batch statistics, applies dropout (consuming
        ``rng``), and updates the running statistics; eval mode is a
        pure deterministic function of the input.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(f"expected batch of shape (b, {self.config.input_dim})")
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        mode = mode or self.mode
        if mode == "eval":
            pred = self._forward_eval(x)
        elif mode == "train":
            if self.config.dropout_rate > 0.0 and rng is None:
                raise ValueError("train-mode forward with dropout needs an rng")
            masks = self.draw_dropout_masks(x.shape[0], rng) if rng is not None else None
            pred, cache = self._forward_train(x, masks)
            self._update_running_stats(cache)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        if not np.all(np.isfinite(pred)):
            raise TrainingDivergedError("non-finite activations in forward pass")
        return pred

    def _update_running_stats(self, cache: dict) -> None:
        m = self.config.bn_momentum
        for i, layer in enumerate(cache["layers"]):
            rm = self.buffers[f"h{i}.running_mean"]
            rv = self.buffers[f"h{i}.running_var"]
            rm *= 1.0 - m
            rm += m * layer["mu"]
            rv *= 1.0 - m
            rv += m * layer["var"]

    def predict(self, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Eval-mode predictions, chunked to bound memory."""
        x = np.asarray(x, dtype=float)
        outputs = [self._forward_eval(x[i : i + chunk])
                   for i in range(0, x.shape[0], chunk)]
        return np.concatenate(outputs, axis=0)

    # ------------------------------------------------------------- state I/O

    def snapshot(self) -> dict:
        return {
            "params": {k: v.copy() for k, v in self.params.items()},
            "buffers": {k: v.copy() for k, v in self.buffers.items()},
        }

    def restore(self, snap: dict) -> None:
        for k, v in snap["params"].items():
            self.params[k] = v.copy()
        for k, v in snap["buffers"].items():
            self.buffers[k] = v.copy()

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config) | {"hidden": list(self.config.hidden)},
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
            "buffers": {k: v.tolist() for k, v in sorted(self.buffers.items())},
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FcnnModel":
        cfg_raw = dict(raw["config"])
        cfg_raw["hidden"] = tuple(cfg_raw["hidden"])
        model = cls(FcnnConfig(**cfg_raw))
        for k, v in raw["params"].items():
            model.params[k] = np.array(v, dtype=float)
        for k, v in raw["buffers"].items():
            model.buffers[k] = np.array(v, dtype=float)
        model.input_mean = np.array(raw["input_mean"], dtype=float)
        model.input_std = np.array(raw["input_std"], dtype=float)
        model.mode = "eval"
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FcnnModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float).reshape(-1)
    target = np.asarray(target, dtype=float).reshape(-1)
    return float(np.mean((pred - target) ** 2))


def loss_and_gradients(
    model: FcnnModel,
    x: np.ndarray,
    y: np.ndarray,
    masks: Sequence[np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch MSE and its exact gradients w.r.t. every parameter.

    Dropout masks can be passed explicitly so the same loss surface can
    be re-evaluated (finite-difference checks); otherwise they are
    drawn from ``rng``. Running statistics are not modified.
    """
    loss, grads, _ = _loss_grads_cache(model, x, y, masks=masks, rng=rng)
    return loss, grads


def _loss_grads_cache(
    model: FcnnModel,
    x: np.ndarray,
    y: np.ndarray,
    masks: Sequence[np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray], dict]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1, model.config.output_dim)
    b = x.shape[0]
    if model.config.dropout_rate > 0.0 and masks is None:
        if rng is None:
            raise ValueError("dropout is active: pass masks or an rng")
        masks = model.draw_dropout_masks(b, rng)

    pred, cache = model._forward_train(x, masks)
    diff = pred - y
    loss = float(np.mean(diff**2))

    grads: dict[str, np.ndarray] = {}
    dpred = 2.0 * diff / diff.size
    a_last = cache["a_last"]
    grads["out.W"] = a_last.T @ dpred
    grads["out.b"] = dpred.sum(axis=0)
    da = dpred @ model.params["out.W"].T

    keep = 1.0 - model.config.dropout_rate
    for i in reversed(range(model.n_hidden)):
        layer = cache["layers"][i]
        if layer["mask"] is not None:
            dr = da * layer["mask"] / keep
        else:
            dr = da
        dbn = dr * (layer["bn_out"] > 0.0)
        zhat = layer["zhat"]
        grads[f"h{i}.gamma"] = (dbn * zhat).sum(axis=0)
        grads[f"h{i}.beta"] = dbn.sum(axis=0)
        dzhat = dbn * model.params[f"h{i}.gamma"]
        # Batch-norm backward including the batch-statistics terms.
        dz = (layer["invstd"] / b) * (
            b * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0)
        )
        a_in = layer["a_in"]
        grads[f"h{i}.W"] = a_in.T @ dz
        grads[f"h{i}.b"] = dz.sum(axis=0)
        da = dz @ model.params[f"h{i}.W"].T
    return loss, grads, cache


class _Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], config: FcnnConfig):
        self.config = config
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.t += 1
        bias1 = 1.0 - cfg.beta1**self.t
        bias2 = 1.0 - cfg.beta2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g**2
            params[k] -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2)
                                                            + cfg.adam_eps)


def _make_batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, order.size, batch_size)]
    # A trailing singleton cannot feed batch norm; fold it into the
    # previous batch.
    if len(batches) > 1 and batches[-1].size == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(
    model: FcnnModel,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    config: FcnnConfig | None = None,
) -> tuple[FcnnModel, TrainHistory]:
    """Mini-batch Adam on MSE with early stopping on validation loss.

    Epoch order is shuffled with a seeded generator; after each epoch
    the validation MSE is computed in eval mode. The best-validation
    weights (and running statistics) are restored before returning.
    """
    config = config or model.config
    config.validate()
    x_train = np.asarray(train_data[0], dtype=float)
    y_train = np.asarray(train_data[1], dtype=float).reshape(-1)
    x_val = np.asarray(val_data[0], dtype=float)
    y_val = np.asarray(val_data[1], dtype=float).reshape(-1)
    n = x_train.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 training samples, got {n}")
    if x_val.shape[0] == 0:
        raise ValueError("validation set is empty")

    if config.normalize_inputs:
        std = x_train.std(axis=0)
        std[std == 0.0] = 1.0
        model.input_mean = x_train.mean(axis=0)
        model.input_std = std

    rng = np.random.default_rng([config.seed, 1])
    optimizer = _Adam(model.params, config)
    history = TrainHistory()
    best_snapshot = model.snapshot()
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        for batch_idx in _make_batches(order, config.batch_size):
            xb = x_train[batch_idx]
            yb = y_train[batch_idx]
            masks = model.draw_dropout_masks(xb.shape[0], rng)
            loss, grads, cache = _loss_grads_cache(model, xb, yb, masks=masks)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}"
                )
            model._update_running_stats(cache)
            epoch_losses.append(loss)
            optimizer.step(model.params, grads)

        val_mse = mse(model.predict(x_val), y_val)
        if not math.isfinite(val_mse):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.records.append(
            EpochRecord(epoch, float(np.mean(epoch_losses)), val_mse)
        )
        if val_mse < history.best_val_mse:
            history.best_val_mse = val_mse
            history.best_epoch = epoch
            best_snapshot = model.snapshot()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                history.stopped_early = True
                break

    model.restore(best_snapshot)
    model.mode = "eval"
    return model, history
