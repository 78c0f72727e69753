"""Class hierarchy and multi-label annotation data model.

Classes are dense integer ids ``0..C-1``. A :class:`Taxonomy` stores one
optional parent per class; classes without children are leaves, the rest
are parents. An :class:`AnnotationSet` holds per-instance label sets and the
optional image-level verified-exist / verified-not-exist lists used by the
evaluator.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_LEVELS = 5


class TaxonomyError(ValueError):
    """Raised for malformed hierarchies (cycles, dangling parents, too deep)."""


class AnnotationError(ValueError):
    """Raised for annotation records that violate the data model."""


@dataclass(frozen=True)
class Taxonomy:
    """Parent links for ``num_classes`` classes.

    ``parent[c]`` is ``-1`` for roots. ``depth`` is 0 for roots and
    ``depth(parent) + 1`` otherwise; at most :data:`MAX_LEVELS` levels
    (depth 0 .. MAX_LEVELS - 1) are allowed.
    """

    parent: tuple[int, ...]
    names: tuple[str, ...] = ()
    depth: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        c = len(self.parent)
        if self.names and len(self.names) != c:
            raise TaxonomyError("names and parent lengths differ")
        if not self.names:
            object.__setattr__(self, "names", tuple(str(i) for i in range(c)))
        for i, p in enumerate(self.parent):
            if p != -1 and not 0 <= p < c:
                raise TaxonomyError(f"class {i}: dangling parent id {p}")
        depth = [-1] * c
        for i in range(c):
            chain = []
            node = i
            while node != -1 and depth[node] < 0:
                if node in chain:
                    raise TaxonomyError(f"cycle detected through class {node}")
                chain.append(node)
                node = self.parent[node]
            base = -1 if node == -1 else depth[node]
            for k, n in enumerate(reversed(chain)):
                depth[n] = base + 1 + k
        if c and max(depth) + 1 > MAX_LEVELS:
            deepest = int(np.argmax(depth))
            raise TaxonomyError(
                f"class {deepest} sits at level {depth[deepest] + 1}; "
                f"at most {MAX_LEVELS} levels allowed"
            )
        object.__setattr__(self, "depth", tuple(depth))

    @property
    def num_classes(self) -> int:
        return len(self.parent)

    @property
    def parents(self) -> frozenset[int]:
        return frozenset(p for p in self.parent if p != -1)

    @property
    def leaves(self) -> frozenset[int]:
        return frozenset(range(self.num_classes)) - self.parents

    def is_leaf(self, c: int) -> bool:
        return c not in self.parents

    def ancestors(self, c: int) -> list[int]:
        return ancestors(self, c)

    def closure(self, labels: Iterable[int]) -> set[int]:
        """Labels plus every ancestor of every label."""
        out = set()
        for c in labels:
            out.add(c)
            out.update(ancestors(self, c))
        return out

    @classmethod
    def flat(cls, num_classes: int) -> "Taxonomy":
        return cls(parent=(-1,) * num_classes)


def ancestors(t: Taxonomy, c: int) -> list[int]:
    """Strict ancestors of ``c`` ordered from immediate parent to root."""
    if not 0 <= c < t.num_classes:
        raise IndexError(f"class id {c} out of range")
    out = []
    p = t.parent[c]
    while p != -1:
        out.append(p)
        p = t.parent[p]
    return out


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def load_taxonomy(path) -> Taxonomy:
    """Read ``index<TAB>name<TAB>parent_index`` rows (``-1`` marks a root).

    A first line whose index field is not numeric is treated as a header.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if lineno == 1 and not _is_int(parts[0]):
                continue
            if len(parts) != 3:
                raise TaxonomyError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                rows.append((int(parts[0]), parts[1], int(parts[2])))
            except ValueError as exc:
                raise TaxonomyError(f"{path}:{lineno}: {exc}") from None
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise TaxonomyError(f"{path}: class indices must be dense 0..C-1")
    return Taxonomy(parent=tuple(r[2] for r in rows), names=tuple(r[1] for r in rows))


def save_taxonomy(t: Taxonomy, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index\tname\tparent_index\n")
        for i in range(t.num_classes):
            fh.write(f"{i}\t{t.names[i]}\t{t.parent[i]}\n")


@dataclass(frozen=True)
class Instance:
    image_id: str
    labels: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(c) for c in self.labels))
        if not self.labels:
            raise AnnotationError(f"instance on image {self.image_id!r} has no labels")


@dataclass(frozen=True)
class AnnotationSet:
    """Instances plus image-level verification lists.

    ``verified_exist`` / ``verified_not_exist`` map image ids to label sets.
    An image missing from both maps has no image-level labels; the evaluator
    then treats every class as verified for it.
    """

    num_classes: int
    instances: tuple[Instance, ...]
    verified_exist: Mapping[str, frozenset[int]] = field(default_factory=dict)
    verified_not_exist: Mapping[str, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        ve = {k: frozenset(v) for k, v in self.verified_exist.items()}
        vne = {k: frozenset(v) for k, v in self.verified_not_exist.items()}
        object.__setattr__(self, "verified_exist", ve)
        object.__setattr__(self, "verified_not_exist", vne)
        c = self.num_classes
        for inst in self.instances:
            if min(inst.labels) < 0 or max(inst.labels) >= c:
                raise AnnotationError(f"image {inst.image_id!r}: label out of range [0, {c})")
        for img, pos in ve.items():
            both = pos & vne.get(img, frozenset())
            if both:
                raise AnnotationError(
                    f"image {img!r}: classes {sorted(both)} both verified-exist and verified-not-exist"
                )
        for labels in list(ve.values()) + list(vne.values()):
            if labels and (min(labels) < 0 or max(labels) >= c):
                raise AnnotationError("verified label out of range")

    def __len__(self):
        return len(self.instances)

    @property
    def image_ids(self) -> list[str]:
        """Distinct image ids in first-seen order."""
        return list(dict.fromkeys(inst.image_id for inst in self.instances))

    @property
    def counts(self) -> np.ndarray:
        return compute_counts(self)[0]

    @property
    def total_images(self) -> int:
        return compute_counts(self)[1]

    def label_matrix(self) -> np.ndarray:
        """Multi-hot ``(num_instances, C)`` float array."""
        y = np.zeros((len(self.instances), self.num_classes))
        for row, inst in enumerate(self.instances):
            y[row, list(inst.labels)] = 1.0
        return y

    def has_image_labels(self, image_id: str) -> bool:
        return image_id in self.verified_exist or image_id in self.verified_not_exist

    def subset(self, indices: Sequence[int]) -> "AnnotationSet":
        insts = tuple(self.instances[i] for i in indices)
        imgs = {inst.image_id for inst in insts}
        return AnnotationSet(
            self.num_classes,
            insts,
            {k: v for k, v in self.verified_exist.items() if k in imgs},
            {k: v for k, v in self.verified_not_exist.items() if k in imgs},
        )


def compute_counts(a: AnnotationSet) -> tuple[np.ndarray, int]:
    """Per-class image counts ``n_i`` and the number of distinct images ``N``.

    ``n_i`` counts distinct images with at least one instance carrying label
    ``i``; several instances of one class on one image count once.
    """
    per_image = defaultdict(set)
    for inst in a.instances:
        per_image[inst.image_id].update(inst.labels)
    n = np.zeros(a.num_classes, dtype=np.int64)
    for labels in per_image.values():
        n[list(labels)] += 1
    return n, len(per_image)


def instance_counts(a: AnnotationSet) -> np.ndarray:
    """Per-class instance counts (diagnostic companion to :func:`compute_counts`)."""
    n = np.zeros(a.num_classes, dtype=np.int64)
    for inst in a.instances:
        n[list(inst.labels)] += 1
    return n


def imbalance_magnitude(counts) -> float:
    """Largest class count divided by the smallest nonzero class count."""
    counts = np.asarray(counts)
    nz = counts[counts > 0]
    if nz.size == 0:
        raise ValueError("all class counts are zero")
    return float(nz.max() / nz.min())


def load_annotations(path, num_classes: int) -> AnnotationSet:
    """Read one JSON object per line.

    Each record has ``image_id`` and ``labels``; ``verified_exist`` and
    ``verified_not_exist`` are optional. Records repeating an image id merge
    their verified lists.
    """
    instances = []
    ve: dict[str, set] = {}
    vne: dict[str, set] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                img = str(rec["image_id"])
                instances.append(Instance(img, frozenset(rec["labels"])))
            except (KeyError, TypeError, json.JSONDecodeError, AnnotationError) as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from None
            if "verified_exist" in rec:
                ve.setdefault(img, set()).update(rec["verified_exist"])
            if "verified_not_exist" in rec:
                vne.setdefault(img, set()).update(rec["verified_not_exist"])
    # an image with only one list given still has image-level labels
    for img in list(ve):
        vne.setdefault(img, set())
    for img in list(vne):
        ve.setdefault(img, set())
    return AnnotationSet(num_classes, tuple(instances), ve, vne)


def save_annotations(a: AnnotationSet, path) -> None:
    written = set()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in a.instances:
            rec = {"image_id": inst.image_id, "labels": sorted(inst.labels)}
            img = inst.image_id
            if a.has_image_labels(img) and img not in written:
                rec["verified_exist"] = sorted(a.verified_exist.get(img, ()))
                rec["verified_not_exist"] = sorted(a.verified_not_exist.get(img, ()))
                written.add(img)
            fh.write(json.dumps(rec) + "\n")


def annotations_from_labels(
    labels: Sequence[Iterable[int]],
    num_classes: int,
    image_ids: Sequence[str] | None = None,
) -> AnnotationSet:
    """Convenience constructor: one instance per entry, no image-level lists."""
    if image_ids is None:
        image_ids = [str(i) for i in range(len(labels))]
    insts = tuple(Instance(img, frozenset(lab)) for img, lab in zip(image_ids, labels))
    return AnnotationSet(num_classes, insts)
