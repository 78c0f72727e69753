"""Ranking-based average precision with image-level ignore semantics.

For class ``c`` every instance contributes one scored entry. The entry is
positive when ``c`` is among the instance's clean labels, ignored when the
image has verified lists and ``c`` is in neither of them, and negative
otherwise. Ignored entries are dropped before ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .taxonomy import AnnotationSet


@dataclass
class EvalReport:
    per_class_ap: np.ndarray  # nan marks classes without positives
    num_pos: np.ndarray
    map: float
    ignored_fp_count: int

    def to_tsv(self, names=None) -> str:
        lines = []
        for c, ap in enumerate(self.per_class_ap):
            name = names[c] if names else str(c)
            ap_s = "nan" if np.isnan(ap) else f"{ap:.6f}"
            lines.append(f"{name}\t{self.num_pos[c]}\t{ap_s}")
        lines.append(f"mAP\t{self.map:.6f}")
        return "\n".join(lines) + "\n"


def average_precision(scores, is_positive, is_ignored=None) -> float:
    """Mean over positives of the precision at each positive's rank.

    Entries are ranked by descending score; ties keep input order.
    Raises ``ValueError`` when no positive remains after ignoring.
    """
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(is_positive, dtype=bool)
    if is_ignored is not None:
        keep = ~np.asarray(is_ignored, dtype=bool)
        scores, pos = scores[keep], pos[keep]
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    hits = pos[np.argsort(-scores, kind="stable")]
    ranks = np.flatnonzero(hits) + 1
    return float((np.arange(1, n_pos + 1) / ranks).sum() / n_pos)


def entry_masks(truth: AnnotationSet) -> tuple[np.ndarray, np.ndarray]:
    """``(positive, ignored)`` boolean matrices of shape ``(instances, C)``."""
    c = truth.num_classes
    positive = truth.label_matrix() > 0
    ignored = np.zeros_like(positive)
    for row, inst in enumerate(truth.instances):
        img = inst.image_id
        if not truth.has_image_labels(img):
            continue
        verified = np.zeros(c, dtype=bool)
        verified[list(truth.verified_exist.get(img, ()))] = True
        verified[list(truth.verified_not_exist.get(img, ()))] = True
        ignored[row] = ~verified & ~positive[row]
    return positive, ignored


def evaluate(predictions, truth: AnnotationSet) -> EvalReport:
    """Per-class AP and their mean over classes that have positives."""
    scores = np.asarray(predictions, dtype=float)
    if scores.shape != (len(truth), truth.num_classes):
        raise ValueError(
            f"predictions of shape {scores.shape} do not match "
            f"{len(truth)} instances x {truth.num_classes} classes"
        )
    positive, ignored = entry_masks(truth)
    ap = np.full(truth.num_classes, np.nan)
    for c in range(truth.num_classes):
        if positive[:, c].any():
            ap[c] = average_precision(scores[:, c], positive[:, c], ignored[:, c])
    present = ~np.isnan(ap)
    mean = float(ap[present].mean()) if present.any() else float("nan")
    return EvalReport(ap, positive.sum(axis=0), mean, int(ignored.sum()))


def tie_audit(scores, is_positive, is_ignored=None, trials: int = 100, seed: int = 0):
    """``(min, max)`` AP over random orderings of tied scores."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(is_positive, dtype=bool)
    ign = np.zeros_like(pos) if is_ignored is None else np.asarray(is_ignored, dtype=bool)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(trials):
        perm = rng.permutation(len(scores))
        values.append(average_precision(scores[perm], pos[perm], ign[perm]))
    return min(values), max(values)
