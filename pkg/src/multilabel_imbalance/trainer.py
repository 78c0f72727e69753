"""Minimal SGD trainer for a linear (or one-hidden-layer) classifier.

Targets are the observed, noisy labels; validation uses clean labels.
Sequential epochs walk a seeded shuffle of the training images, balanced
epochs draw the same number of images through the soft-balance sampler.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .evaluation import evaluate
from .sampling import ClassBalancedSampler, build_plan
from .schedule import BALANCED, TrainPlan, next_epoch, sequential_order
from .synth import SynthDataset

CHECKPOINT_MAGIC = b"IMBM"
LOSS_NAMES = ("softmax", "concurrent", "bce", "focal")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Model:
    weights: np.ndarray  # (C, in)
    bias: np.ndarray  # (C,)
    hidden_weights: np.ndarray | None = None  # (d, h)
    hidden_bias: np.ndarray | None = None  # (h,)

    @property
    def num_outputs(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1] if self.hidden_weights is None else self.hidden_weights.shape[0]

    @property
    def hidden(self) -> int:
        return 0 if self.hidden_weights is None else self.hidden_weights.shape[1]

    def params(self) -> list[np.ndarray]:
        out = [self.weights, self.bias]
        if self.hidden_weights is not None:
            out += [self.hidden_weights, self.hidden_bias]
        return out

    def copy(self) -> "Model":
        return Model(*[None if p is None else p.copy() for p in
                       (self.weights, self.bias, self.hidden_weights, self.hidden_bias)])


def init_model(num_outputs: int, dim: int, hidden: int = 0, seed: int = 0, scale: float = 0.01) -> Model:
    rng = np.random.default_rng([seed, 7])
    if hidden:
        w1 = rng.normal(scale=math.sqrt(2.0 / dim), size=(dim, hidden))
        return Model(rng.normal(scale=scale, size=(num_outputs, hidden)), np.zeros(num_outputs),
                     w1, np.zeros(hidden))
    return Model(rng.normal(scale=scale, size=(num_outputs, dim)), np.zeros(num_outputs))


def _hidden(model: Model, x):
    return np.maximum(x @ model.hidden_weights + model.hidden_bias, 0.0)


def forward(model: Model, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"features have dimension {x.shape[-1]}, model expects {model.input_dim}")
    if model.hidden_weights is not None:
        x = _hidden(model, x)
    return x @ model.weights.T + model.bias


@dataclass
class LossSpec:
    name: str = "concurrent"
    grad_mode: str = "exact"
    gamma: float = 2.0
    alpha: float = 0.25
    class_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ValueError(f"unknown loss {self.name!r}; choose from {LOSS_NAMES}")

    def __call__(self, z, y, rates=None) -> losses.LossResult:
        if self.name == "softmax":
            return losses.softmax_ce(z, y, self.class_weights)
        if self.name == "concurrent":
            r = np.zeros((z.shape[1], z.shape[1])) if rates is None else rates
            return losses.concurrent_softmax_ce(z, y, r, self.grad_mode)
        if self.name == "bce":
            return losses.bce_loss(z, y)
        return losses.focal_loss(z, y, self.gamma, self.alpha)


def loss_and_grads(model: Model, x, y, loss: LossSpec, rates=None):
    """Batch-mean loss and gradients ordered like ``model.params()``."""
    if model.hidden_weights is not None:
        h = _hidden(model, x)
    else:
        h = x
    z = h @ model.weights.T + model.bias
    res = loss(z, y, rates)
    g = res.gradient
    grads = [g.T @ h, g.sum(axis=0)]
    if model.hidden_weights is not None:
        gh = (g @ model.weights) * (h > 0)
        grads += [x.T @ gh, gh.sum(axis=0)]
    return res.value, grads


@dataclass
class SGD:
    """Momentum SGD with weight decay folded into the weight gradients."""

    momentum: float = 0.9
    weight_decay: float = 0.0001
    velocity: list | None = None

    def step(self, model: Model, grads, lr: float) -> None:
        params = model.params()
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            if p.ndim == 2 and self.weight_decay:
                g = g + self.weight_decay * p
            v *= self.momentum
            v += g
            p -= lr * v


def predict(model: Model, features, mode: str = "softmax", rates=None, num_classes=None) -> np.ndarray:
    """Per-instance class scores by softmax or concurrent softmax.

    With a background output (``num_outputs > num_classes``) the extra
    column takes part in normalization and is dropped from the result.
    """
    z = forward(model, features)
    c = z.shape[1] if num_classes is None else num_classes
    if mode == "softmax":
        scores = losses.softmax_probs(z)
    elif mode == "concurrent":
        scores = losses.concurrent_softmax_infer(z, _pad_rates(rates, c, z.shape[1]))
    else:
        raise ValueError(f"unknown prediction mode {mode!r}")
    return scores[:, :c]


def _pad_rates(rates, c, outputs):
    r = np.zeros((outputs, outputs))
    if rates is not None:
        r[:c, :c] = rates
    return r


@dataclass
class EpochLog:
    epoch: int
    phase: str
    lr: float
    train_loss: float
    val_map: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.phase}\t{self.lr:.6g}\t{self.train_loss:.6f}\t{self.val_map:.6f}"


@dataclass
class TrainResult:
    model: Model
    log: list[EpochLog] = field(default_factory=list)

    def metrics_text(self) -> str:
        return "".join(entry.line() + "\n" for entry in self.log)


def _image_rows(annotations):
    rows: dict[str, list[int]] = {}
    for k, inst in enumerate(annotations.instances):
        rows.setdefault(inst.image_id, []).append(k)
    return rows


def train(
    ds: SynthDataset,
    plan: TrainPlan,
    loss: LossSpec | str = "concurrent",
    rates=None,
    seed: int = 0,
    val: SynthDataset | None = None,
    eval_mode: str = "softmax",
    hidden: int = 0,
    background: bool = False,
    model: Model | None = None,
) -> TrainResult:
    """Run every phase of ``plan`` on ``ds``.

    Raises :class:`TrainingDiverged` when a batch loss is not finite.
    """
    if isinstance(loss, str):
        loss = LossSpec(loss)
    c = ds.observed.num_classes
    outputs = c + 1 if background else c
    x_all = np.asarray(ds.features, dtype=float)
    y_all = np.zeros((len(ds), outputs))
    y_all[:, :c] = ds.observed.label_matrix()
    r = None if rates is None else _pad_rates(rates, c, outputs)
    if model is None:
        model = init_model(outputs, x_all.shape[1], hidden, seed)
    elif model.num_outputs != outputs or model.input_dim != x_all.shape[1]:
        raise ValueError("initial model does not match the dataset")
    opt = SGD(plan.momentum, plan.weight_decay)

    rows = _image_rows(ds.observed)
    image_ids = list(rows)
    one_each = all(len(v) == 1 for v in rows.values())
    image_index = {img: k for k, img in enumerate(image_ids)}
    steps = math.ceil(len(image_ids) / plan.batch_size)
    samplers = {}
    result = TrainResult(model)

    def batch_rows(img_idx):
        if one_each:
            return row_of[img_idx]
        return np.concatenate([rows[image_ids[k]] for k in img_idx])

    row_of = np.array([rows[img][0] for img in image_ids])

    for epoch in range(plan.total_epochs):
        kind, lam, lr = next_epoch(plan, epoch)
        if kind == BALANCED:
            if lam not in samplers:
                sp = build_plan(ds.observed, lam)
                flat = np.array([image_index[img] for imgs in sp.class_images for img in imgs])
                samplers[lam] = (ClassBalancedSampler(sp, seed=[seed, 1, len(samplers)]), flat)
            sampler, flat = samplers[lam]
            batches = [flat[sampler.draw_indices(plan.batch_size)] for _ in range(steps)]
        else:
            order = sequential_order(len(image_ids), seed, epoch)
            batches = [order[k:k + plan.batch_size] for k in range(0, len(order), plan.batch_size)]
        total = 0.0
        for img_idx in batches:
            idx = batch_rows(img_idx)
            value, grads = loss_and_grads(model, x_all[idx], y_all[idx], loss, r)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} (lr={lr:g})")
            opt.step(model, grads, lr)
            total += value
        val_map = float("nan")
        if val is not None:
            scores = predict(model, val.features, eval_mode, rates, c)
            val_map = evaluate(scores, val.truth).map
        phase = kind if lam is None else f"{kind}({lam:g})"
        result.log.append(EpochLog(epoch, phase, lr, total / len(batches), val_map))
    return result


def save_checkpoint(model: Model, path) -> None:
    """16-byte header (magic, outputs, input dim, hidden) then float32 params.

    Parameter order: [hidden weights (d x h), hidden bias], weights, bias.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<III", model.num_outputs, model.input_dim, model.hidden))
        blocks = [model.weights, model.bias]
        if model.hidden_weights is not None:
            blocks = [model.hidden_weights, model.hidden_bias] + blocks
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint")
        c, d, h = struct.unpack("<III", header[4:])
        data = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
    shapes = ([(d, h), (h,)] if h else []) + [(c, h or d), (c,)]
    need = sum(math.prod(s) for s in shapes)
    if data.size != need:
        raise ValueError(f"{path}: expected {need} parameters, found {data.size}")
    parts, pos = [], 0
    for s in shapes:
        n = math.prod(s)
        parts.append(data[pos:pos + n].reshape(s))
        pos += n
    if h:
        return Model(parts[2], parts[3], parts[0], parts[1])
    return Model(parts[0], parts[1])
