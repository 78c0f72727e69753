"""Training phases and the stepped learning-rate rule.

A phase is either ``sequential`` (every training image once per epoch, in
a seeded shuffle) or ``balanced`` (batches drawn by the soft-balance sampler
with a given lambda). Epoch numbers inside a phase's ``lr_schedule`` are
1-based and a multiplier takes effect at the start of the named epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEQUENTIAL = "sequential"
BALANCED = "balanced"


@dataclass(frozen=True)
class Phase:
    kind: str
    epochs: int
    lr_schedule: tuple[tuple[int, float], ...] = ((1, 1.0),)
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in (SEQUENTIAL, BALANCED):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.kind == BALANCED and self.lam is None:
            raise ValueError("balanced phase needs a lambda")
        if self.epochs < 1:
            raise ValueError("a phase needs at least one epoch")
        starts = [e for e, _ in self.lr_schedule]
        mults = [m for _, m in self.lr_schedule]
        if not starts or starts[0] != 1 or starts != sorted(set(starts)):
            raise ValueError("lr_schedule must start at epoch 1 with increasing epochs")
        if any(m <= 0 for m in mults) or any(b > a for a, b in zip(mults, mults[1:])):
            raise ValueError("lr multipliers must be positive and non-increasing")

    def multiplier(self, epoch: int) -> float:
        """Multiplier at 1-based ``epoch`` of this phase."""
        current = self.lr_schedule[0][1]
        for start, mult in self.lr_schedule:
            if epoch >= start:
                current = mult
        return current


def decay_points(epochs: int) -> tuple[int, ...]:
    """Decay epochs at 4/7 and 6/7 of the phase, rounded down.

    Points are kept at least one epoch apart and after epoch 1; points past
    the end of the phase are dropped.
    """
    first = max(2, epochs * 4 // 7)
    second = max(first + 1, epochs * 6 // 7)
    return tuple(p for p in (first, second) if p <= epochs)


def scaled_phase(kind: str, epochs: int, lam: float | None = None) -> Phase:
    """Phase of any length with the 1x decay pattern rescaled to it."""
    sched = [(1, 1.0)] + list(zip(decay_points(epochs), (0.1, 0.01)))
    return Phase(kind, epochs, tuple(sched), lam)


def one_x_schedule(kind: str = SEQUENTIAL, lam: float | None = None) -> Phase:
    """Seven epochs, lr x0.1 from epoch 4 and x0.01 from epoch 6."""
    return Phase(kind, 7, ((1, 1.0), (4, 0.1), (6, 0.01)), lam)


@dataclass(frozen=True)
class TrainPlan:
    phases: tuple[Phase, ...]
    base_lr_per_sample: float = 0.00125
    batch_size: int = 16
    momentum: float = 0.9
    weight_decay: float = 0.0001

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ValueError("a plan needs at least one phase")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def base_lr(self) -> float:
        return self.base_lr_per_sample * self.batch_size

    @property
    def total_epochs(self) -> int:
        return sum(p.epochs for p in self.phases)

    def lr_sequence(self) -> list[float]:
        return [next_epoch(self, e)[2] for e in range(self.total_epochs)]

    def describe(self) -> str:
        parts = []
        for p in self.phases:
            sched = ",".join(f"{e}:{m:g}" for e, m in p.lr_schedule)
            lam = "" if p.lam is None else f"({p.lam:g})"
            parts.append(f"{p.kind}{lam}x{p.epochs}[{sched}]")
        return " + ".join(parts)


def hybrid_plan(pretrain_epochs: int, finetune_lambda: float, **kwargs) -> TrainPlan:
    """Sequential pretraining followed by a 1x soft-balance finetune.

    The finetune restarts the learning rate from the base value.
    """
    if pretrain_epochs < 1:
        raise ValueError("pretrain_epochs must be >= 1")
    return TrainPlan(
        (scaled_phase(SEQUENTIAL, pretrain_epochs), one_x_schedule(BALANCED, finetune_lambda)),
        **kwargs,
    )


def single_phase_plan(kind: str, epochs: int, lam: float | None = None, **kwargs) -> TrainPlan:
    return TrainPlan((scaled_phase(kind, epochs, lam),), **kwargs)


def next_epoch(plan: TrainPlan, global_epoch: int) -> tuple[str, float | None, float]:
    """``(kind, lambda or None, lr)`` for 0-based ``global_epoch``."""
    if not 0 <= global_epoch < plan.total_epochs:
        raise IndexError(f"epoch {global_epoch} outside [0, {plan.total_epochs})")
    offset = global_epoch
    for phase in plan.phases:
        if offset < phase.epochs:
            lr = plan.base_lr * phase.multiplier(offset + 1)
            return phase.kind, phase.lam, lr
        offset -= phase.epochs
    raise AssertionError("unreachable")


def sequential_order(num_items: int, seed: int, global_epoch: int) -> np.ndarray:
    """Seeded permutation of ``range(num_items)`` for one sequential epoch."""
    rng = np.random.default_rng([seed, global_epoch])
    return rng.permutation(num_items)
