"""Soft-balance class sampling.

Per-class probabilities interpolate geometrically between the data
frequency ``P_n(i) = n_i / sum_j n_j`` and the uniform class-aware
probability ``P_a(i) = 1 / C'``::

    P_s(i) = P_a(i) ** lam * P_n(i) ** (1 - lam),   P*_s = P_s / sum P_s

``lam = 0`` is non-balanced sampling, ``lam = 1`` class-aware sampling.
Only the ``C'`` classes with at least one image take part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .taxonomy import AnnotationSet, compute_counts


@dataclass(frozen=True)
class SamplingPlan:
    lam: float
    counts: np.ndarray
    p_n: np.ndarray
    p_a: np.ndarray
    p_s: np.ndarray
    p_s_norm: np.ndarray
    class_images: tuple[tuple[str, ...], ...]
    total_images: int = 0

    @property
    def num_active(self) -> int:
        return int(np.count_nonzero(self.counts))

    @property
    def num_classes(self) -> int:
        return len(self.counts)


def soft_balance_probs(counts, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(p_n, p_a, p_s, p_s_norm)`` for per-class counts.

    Classes with zero count get probability 0 everywhere.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n = np.asarray(counts, dtype=float)
    active = n > 0
    if not active.any():
        raise ValueError("all class counts are zero")
    p_n = np.where(active, n / n[active].sum(), 0.0)
    p_a = np.where(active, 1.0 / active.sum(), 0.0)
    p_s = np.zeros_like(n)
    p_s[active] = p_a[active] ** lam * p_n[active] ** (1.0 - lam)
    return p_n, p_a, p_s, p_s / p_s.sum()


def build_plan(a: AnnotationSet, lam: float) -> SamplingPlan:
    """Sampling plan over the images of ``a``.

    ``class_images[i]`` lists (in first-seen order) every image holding an
    instance labeled ``i``.
    """
    counts, total = compute_counts(a)
    p_n, p_a, p_s, p_norm = soft_balance_probs(counts, lam)
    per_class: list[dict] = [dict() for _ in range(a.num_classes)]
    for inst in a.instances:
        for c in inst.labels:
            per_class[c][inst.image_id] = None
    images = tuple(tuple(d) for d in per_class)
    return SamplingPlan(lam, counts, p_n, p_a, p_s, p_norm, images, total)


@dataclass
class ClassBalancedSampler:
    """Draws a class from ``plan.p_s_norm`` per slot, then an image of that class.

    Images are drawn uniformly with replacement, or, with
    ``without_replacement=True``, by walking a per-class shuffled cursor that
    reshuffles when exhausted. Owns its RNG; give each worker its own
    sampler seeded ``seed + worker_index``.
    """

    plan: SamplingPlan
    seed: int = 0
    without_replacement: bool = False
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        self._sizes = np.array([len(imgs) for imgs in self.plan.class_images])
        self._offsets = np.concatenate([[0], np.cumsum(self._sizes)[:-1]])
        self._flat = [img for imgs in self.plan.class_images for img in imgs]
        self._cursor: dict[int, tuple[np.ndarray, int]] = {}

    def draw_classes(self, size: int) -> np.ndarray:
        return self.rng.choice(self.plan.num_classes, size=size, p=self.plan.p_s_norm)

    def draw_indices(self, size: int) -> np.ndarray:
        """Indices into the flattened per-class image lists (see :meth:`draw`)."""
        classes = self.draw_classes(size)
        if np.any(self._sizes[classes] == 0):
            raise ValueError("drew a class without images")
        if not self.without_replacement:
            within = (self.rng.random(size) * self._sizes[classes]).astype(np.int64)
            return self._offsets[classes] + within
        out = np.empty(size, dtype=np.int64)
        for slot, c in enumerate(classes):
            order, pos = self._cursor.get(c, (None, 0))
            if order is None or pos == len(order):
                order, pos = self.rng.permutation(self._sizes[c]), 0
            out[slot] = self._offsets[c] + order[pos]
            self._cursor[c] = (order, pos + 1)
        return out

    def draw(self, batch_size: int) -> list[str]:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        return [self._flat[i] for i in self.draw_indices(batch_size)]


def sample_batch(plan: SamplingPlan, batch_size: int, seed: int,
                 without_replacement: bool = False) -> list[str]:
    """One batch of image ids; identical ``(plan, seed)`` give identical batches."""
    return ClassBalancedSampler(plan, seed, without_replacement).draw(batch_size)


@dataclass
class ExposureReport:
    visits_per_image: np.ndarray
    neglected_linear: np.ndarray
    never_sampled_poisson: np.ndarray


def exposure_report(plan: SamplingPlan, epochs_equiv: float = 1.0) -> ExposureReport:
    """Expected visits per image of each class over ``epochs_equiv`` epochs.

    One epoch draws ``N = sum_j n_j`` samples, so an image of class ``i`` is
    visited ``epochs_equiv * P*_s(i) * N / n_i`` times on average. Alongside,
    ``max(0, 1 - visits)`` and the Poisson never-sampled fraction
    ``exp(-visits)``. Zero-count classes report 0 visits.
    """
    n = plan.counts.astype(float)
    total = n.sum()
    visits = np.divide(epochs_equiv * plan.p_s_norm * total, n, out=np.zeros_like(n), where=n > 0)
    return ExposureReport(visits, np.clip(1.0 - visits, 0.0, None), np.exp(-visits))


def plan_entropy(plan: SamplingPlan) -> float:
    """Shannon entropy of ``P*_s`` in nats."""
    p = plan.p_s_norm[plan.p_s_norm > 0]
    return float(-(p * np.log(p)).sum())


def format_plan_tsv(plan: SamplingPlan, names=None, epochs_equiv: float = 1.0) -> str:
    rep = exposure_report(plan, epochs_equiv)
    lines = ["class\tn_i\tP_n\tP_s_norm\texpected_visits\tnever_sampled_poisson"]
    for i in range(plan.num_classes):
        name = names[i] if names else str(i)
        lines.append(
            f"{name}\t{plan.counts[i]}\t{plan.p_n[i]:.6g}\t{plan.p_s_norm[i]:.6g}"
            f"\t{rep.visits_per_image[i]:.6g}\t{rep.never_sampled_poisson[i]:.6g}"
        )
    return "\n".join(lines) + "\n"
