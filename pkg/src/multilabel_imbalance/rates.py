"""Concurrent-rate matrix estimation.

``r[i, j]`` is the probability that an object of class ``i`` also carries
(or is labeled as) class ``j``. Matrices are plain ``(C, C)`` float arrays
with entries in ``[0, 1]`` and a zero diagonal.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .taxonomy import AnnotationSet, Taxonomy, ancestors

HIERARCHY_MODES = ("remove_suppression", "literal_zero")


def validate_rates(r, num_classes: int | None = None) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"rate matrix must be square, got shape {r.shape}")
    if num_classes is not None and r.shape[0] != num_classes:
        raise ValueError(f"rate matrix is {r.shape[0]}x{r.shape[0]}, expected {num_classes}")
    if not np.all(np.isfinite(r)) or r.min(initial=0.0) < 0 or r.max(initial=0.0) > 1:
        raise ValueError("rate entries must lie in [0, 1]")
    return r


def hierarchy_pairs(t: Taxonomy) -> list[tuple[int, int]]:
    """``(leaf, ancestor)`` pairs of the taxonomy."""
    return [(leaf, anc) for leaf in sorted(t.leaves) for anc in ancestors(t, leaf)]


def _multi_hot(a: AnnotationSet, image_level: bool) -> tuple[list[str], np.ndarray]:
    if not image_level:
        return [inst.image_id for inst in a.instances], a.label_matrix()
    per_image = defaultdict(set)
    for inst in a.instances:
        per_image[inst.image_id].update(inst.labels)
    keys = list(per_image)
    y = np.zeros((len(keys), a.num_classes))
    for row, k in enumerate(keys):
        y[row, list(per_image[k])] = 1.0
    return keys, y


def cooccurrence_counts(
    a: AnnotationSet, reference: AnnotationSet | None = None, image_level: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Co-label counts ``M[i, j]`` and source counts ``n[i]``.

    Without ``reference`` an instance contributes to ``M[i, j]`` when it
    carries both labels. With ``reference`` (aligned instance by instance,
    e.g. clean labels) the source label ``i`` is read from ``reference`` and
    the target label ``j`` from ``a``.
    """
    keys, target = _multi_hot(a, image_level)
    if reference is None:
        source = target
    else:
        if reference.num_classes != a.num_classes or len(reference) != len(a):
            raise ValueError("reference annotations are not aligned with the observed set")
        ref_keys, source = _multi_hot(reference, image_level)
        if ref_keys != keys:
            raise ValueError("reference annotations are not aligned with the observed set")
    return source.T @ target, source.sum(axis=0)


def estimate_rates(
    a: AnnotationSet,
    t: Taxonomy,
    min_rate: float = 0.1,
    hierarchy_mode: str | None = "remove_suppression",
    reference: AnnotationSet | None = None,
    image_level: bool = False,
) -> np.ndarray:
    """Concurrent rates ``r[i, j] = #(i and j) / #i`` from annotation counts.

    Entries below ``min_rate`` are floored to 0, the hierarchy rule is then
    applied (skipped when ``hierarchy_mode`` is None) and the diagonal is
    zeroed.
    """
    if len(a) == 0:
        raise ValueError("cannot estimate rates from an empty annotation set")
    if not 0 <= min_rate < 1:
        raise ValueError("min_rate must lie in [0, 1)")
    if t.num_classes != a.num_classes:
        raise ValueError("taxonomy and annotations disagree on the number of classes")
    co, n = cooccurrence_counts(a, reference, image_level)
    r = np.divide(co, n[:, None], out=np.zeros_like(co), where=n[:, None] > 0)
    r[r < min_rate] = 0.0
    if hierarchy_mode is not None:
        r = apply_hierarchy_rule(r, t, hierarchy_mode)
    np.fill_diagonal(r, 0.0)
    return r


def apply_hierarchy_rule(m, t: Taxonomy, mode: str = "remove_suppression") -> np.ndarray:
    """Overwrite every (leaf, ancestor) and (ancestor, leaf) entry.

    ``remove_suppression`` sets them to 1 so hierarchy scores never suppress
    each other; ``literal_zero`` sets them to 0.
    """
    if mode not in HIERARCHY_MODES:
        raise ValueError(f"unknown hierarchy mode {mode!r}")
    r = validate_rates(m, t.num_classes).copy()
    value = 1.0 if mode == "remove_suppression" else 0.0
    for leaf, anc in hierarchy_pairs(t):
        r[leaf, anc] = value
        r[anc, leaf] = value
    return r


def top_confused_pairs(m, k: int, taxonomy: Taxonomy | None = None) -> list[tuple[int, int, float]]:
    """The ``k`` largest nonzero off-diagonal entries, descending.

    Ties are broken by ``(i, j)`` ascending. When a taxonomy is given, every
    (descendant, ancestor) pair is skipped in both directions.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    r = np.asarray(m, dtype=float)
    skip = set()
    if taxonomy is not None:
        for c in range(taxonomy.num_classes):
            for anc in ancestors(taxonomy, c):
                skip.update({(c, anc), (anc, c)})
    ii, jj = np.nonzero(r)
    entries = [
        (int(i), int(j), float(r[i, j]))
        for i, j in zip(ii, jj)
        if i != j and (i, j) not in skip
    ]
    entries.sort(key=lambda e: (-e[2], e[0], e[1]))
    return entries[:k]


def save_rates(m, path) -> None:
    """Write nonzero entries as ``i<TAB>j<TAB>rate`` rows, i-major."""
    r = np.asarray(m, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j in zip(*np.nonzero(r)):
            fh.write(f"{i}\t{j}\t{float(r[i, j])!r}\n")


def load_rates(path, num_classes: int) -> np.ndarray:
    r = np.zeros((num_classes, num_classes))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: expected i<TAB>j<TAB>rate") from None
            if not (0 <= i < num_classes and 0 <= j < num_classes):
                raise ValueError(f"{path}:{lineno}: class index out of range")
            r[i, j] = v
    return validate_rates(r, num_classes)
