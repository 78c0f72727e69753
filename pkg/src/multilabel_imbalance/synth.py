"""Synthetic imbalanced multi-label data with known label noise.

Each instance is one image. Leaf classes follow a power law, features are
Gaussian blobs around per-leaf prototypes, clean labels are the leaf (or
two leaves) plus all ancestors, and the observed labels add three kinds of
corruption: confused-pair flips, parent-only labeling and (through the
clean labels) explicit multi-leaf objects.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rates import estimate_rates, load_rates, save_rates
from .taxonomy import (
    AnnotationSet,
    Instance,
    Taxonomy,
    load_annotations,
    load_taxonomy,
    save_annotations,
    save_taxonomy,
)

FEATURE_MAGIC = b"IMBK"
FLIP_MODES = ("replace", "colabel")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``depth`` counts hierarchy levels (1 = flat). ``separation`` is the norm
    of the leaf prototypes; noise is unit-variance per dimension.
    ``unverified_frac`` is the share of absent classes left out of each
    image's verified-not-exist list (their false positives are ignored by
    the evaluator).
    """

    num_leaf: int = 40
    num_parents: int = 8
    depth: int = 3
    imbalance_magnitude: float = 100.0
    feature_dim: int = 32
    separation: float = 4.0
    confusion_pairs: tuple[tuple[int, int, float], ...] = ()
    parent_only_prob: float = 0.0
    multi_leaf_prob: float = 0.0
    images: int = 10000
    seed: int = 0
    flip_mode: str = "replace"
    unverified_frac: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self,
            "confusion_pairs",
            tuple((int(i), int(j), float(p)) for i, j, p in self.confusion_pairs),
        )

    def validate(self) -> None:
        if self.num_leaf < 1:
            raise ConfigError("need at least one leaf class")
        if self.num_parents < 0 or self.num_leaf + self.num_parents > 500:
            raise ConfigError("num_leaf + num_parents must lie in [1, 500]")
        if not 1 <= self.depth <= 5:
            raise ConfigError("depth (levels) must lie in [1, 5]")
        if self.num_parents and self.depth < 2:
            raise ConfigError("parents need depth >= 2")
        if self.num_parents > self.num_leaf:
            raise ConfigError("every parent needs a leaf child: num_parents <= num_leaf")
        if self.images < 1:
            raise ConfigError("images must be >= 1")
        if self.imbalance_magnitude < 1:
            raise ConfigError("imbalance_magnitude must be >= 1")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if self.flip_mode not in FLIP_MODES:
            raise ConfigError(f"flip_mode must be one of {FLIP_MODES}")
        for name in ("parent_only_prob", "multi_leaf_prob", "unverified_frac"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        out_rate: dict[int, float] = {}
        for i, j, p in self.confusion_pairs:
            if not (0 <= i < self.num_leaf and 0 <= j < self.num_leaf):
                raise ConfigError(f"confusion pair ({i}, {j}) must reference two leaf classes")
            if i == j:
                raise ConfigError(f"confusion pair ({i}, {j}) flips a class to itself")
            if not 0 <= p <= 1:
                raise ConfigError(f"flip rate {p} outside [0, 1]")
            out_rate[i] = out_rate.get(i, 0.0) + p
        if any(total > 1 + 1e-12 for total in out_rate.values()):
            raise ConfigError("flip rates out of one class sum to more than 1")


@dataclass
class SynthDataset:
    features: np.ndarray
    observed: AnnotationSet
    truth: AnnotationSet
    taxonomy: Taxonomy
    true_rates: np.ndarray
    config: SynthConfig | None = None
    prototypes: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.features)

    def subset(self, indices) -> "SynthDataset":
        idx = np.asarray(indices)
        return replace(
            self,
            features=self.features[idx],
            observed=self.observed.subset(idx),
            truth=self.truth.subset(idx),
        )


def power_law_frequencies(num: int, magnitude: float) -> np.ndarray:
    """Frequencies ``∝ rank^-s`` with ``f[0] / f[-1] == magnitude``."""
    if num == 1:
        return np.ones(1)
    s = math.log(magnitude) / math.log(num)
    f = np.arange(1, num + 1, dtype=float) ** -s
    return f / f.sum()


def allocate(total: int, freqs: np.ndarray) -> np.ndarray:
    """Integer counts summing to ``total`` (largest remainder), each >= 1 when possible."""
    raw = total * freqs
    counts = np.floor(raw).astype(np.int64)
    rest = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rest]] += 1
    short = np.flatnonzero(counts == 0)
    for k in short:
        donor = int(np.argmax(counts))
        if counts[donor] <= 1:
            break
        counts[donor] -= 1
        counts[k] = 1
    return counts


def build_taxonomy(num_leaf: int, num_parents: int, depth: int, rng) -> Taxonomy:
    """Leaves are classes ``0..L-1``, parents ``L..L+P-1``.

    Parents are spread round-robin over levels ``0..depth-2``; each parent
    below the top hangs off a random parent one level up. Leaf ``k < P``
    hangs off parent ``k`` so every parent has a child; the remaining leaves
    pick a random parent or stay roots.
    """
    parent = [-1] * (num_leaf + num_parents)
    if num_parents:
        levels = max(depth - 1, 1)
        by_level: list[list[int]] = [[] for _ in range(levels)]
        for k in range(num_parents):
            cls = num_leaf + k
            lvl = k % levels
            if lvl > 0:
                parent[cls] = int(rng.choice(by_level[lvl - 1]))
            by_level[lvl].append(cls)
        for k in range(num_leaf):
            if k < num_parents:
                parent[k] = num_leaf + k
            else:
                pick = int(rng.integers(0, num_parents + 1))
                parent[k] = num_leaf + pick if pick < num_parents else -1
    names = [f"leaf{k}" for k in range(num_leaf)] + [f"parent{k}" for k in range(num_parents)]
    return Taxonomy(tuple(parent), tuple(names))


def generate(cfg: SynthConfig) -> SynthDataset:
    """Draw a dataset; identical configs give bit-identical output."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    tax = build_taxonomy(cfg.num_leaf, cfg.num_parents, cfg.depth, rng)
    c = tax.num_classes
    n_img = cfg.images

    freqs = power_law_frequencies(cfg.num_leaf, cfg.imbalance_magnitude)
    first = rng.permutation(np.repeat(np.arange(cfg.num_leaf), allocate(n_img, freqs)))
    protos = rng.normal(size=(cfg.num_leaf, cfg.feature_dim))
    protos *= cfg.separation / np.linalg.norm(protos, axis=1, keepdims=True)

    has_second = rng.random(n_img) < cfg.multi_leaf_prob
    second = np.full(n_img, -1)
    if cfg.num_leaf > 1:
        for k in np.flatnonzero(has_second):
            p = freqs.copy()
            p[first[k]] = 0.0
            second[k] = rng.choice(cfg.num_leaf, p=p / p.sum())

    centers = protos[first].copy()
    two = second >= 0
    centers[two] = (protos[first[two]] + protos[second[two]]) / math.sqrt(2)
    features = centers + rng.normal(size=(n_img, cfg.feature_dim))

    flips: dict[int, list[tuple[int, float]]] = {}
    true_rates = np.zeros((c, c))
    for i, j, p in cfg.confusion_pairs:
        flips.setdefault(i, []).append((j, p))
        true_rates[i, j] = p

    u_drop = rng.random((n_img, 2))
    u_flip = rng.random((n_img, 2))
    ids = [f"img{k:07d}" for k in range(n_img)]
    truth_insts, obs_insts = [], []
    ve, vne = {}, {}
    for k in range(n_img):
        leaves = [int(first[k])] + ([int(second[k])] if second[k] >= 0 else [])
        truth = tax.closure(leaves)
        kept, extra = [], set()
        for slot, leaf in enumerate(leaves):
            target = leaf
            acc = 0.0
            for j, p in flips.get(leaf, ()):
                acc += p
                if u_flip[k, slot] < acc:
                    target = j
                    break
            labeled = [leaf, target] if target != leaf and cfg.flip_mode == "colabel" else [target]
            # parent-only: the labeled leaves give way to their ancestors,
            # unless that would leave nothing
            anc = set().union(*(tax.ancestors(x) for x in labeled))
            if anc and u_drop[k, slot] < cfg.parent_only_prob:
                extra.update(anc)
            else:
                kept.extend(labeled)
        observed = tax.closure(kept) | extra
        truth_insts.append(Instance(ids[k], frozenset(truth)))
        obs_insts.append(Instance(ids[k], frozenset(observed)))

    # images without verified lists count as fully verified, so the lists
    # are only materialized when some classes stay unverified
    if cfg.unverified_frac > 0:
        u_ver = rng.random((n_img, c)) >= cfg.unverified_frac
        for k, inst in enumerate(truth_insts):
            ve[ids[k]] = inst.labels
            vne[ids[k]] = frozenset(
                int(x) for x in np.flatnonzero(u_ver[k]) if x not in inst.labels
            )

    return SynthDataset(
        features=features,
        observed=AnnotationSet(c, tuple(obs_insts)),
        truth=AnnotationSet(c, tuple(truth_insts), ve, vne),
        taxonomy=tax,
        true_rates=true_rates,
        config=cfg,
        prototypes=protos,
    )


def rate_recovery_check(ds: SynthDataset) -> float:
    """Largest gap between configured flip rates and their estimates.

    Estimates join clean source labels with observed target labels, with no
    flooring and no hierarchy override.
    """
    if ds.config is None or not ds.config.confusion_pairs:
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(ds.true_rates))]
    else:
        pairs = [(i, j) for i, j, _ in ds.config.confusion_pairs]
    if not pairs:
        return 0.0
    est = estimate_rates(ds.observed, ds.taxonomy, 0.0, hierarchy_mode=None, reference=ds.truth)
    return max(abs(est[i, j] - ds.true_rates[i, j]) for i, j in pairs)


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded train/validation split of ``range(n)``, each part sorted."""
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def write_features(features, path) -> None:
    x = np.ascontiguousarray(features, dtype="<f4")
    rows, dim = x.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<III", rows, dim, 0))
        fh.write(x.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != FEATURE_MAGIC:
            raise ValueError(f"{path}: not a feature file")
        rows, dim, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != rows * dim:
        raise ValueError(f"{path}: expected {rows}x{dim} floats, found {data.size}")
    return data.reshape(rows, dim).astype(np.float64)


FILES = {
    "taxonomy": "classes.tsv",
    "observed": "annotations.jsonl",
    "truth": "annotations.truth.jsonl",
    "features": "features.bin",
    "rates": "rates.true.tsv",
}


def write_dataset(ds: SynthDataset, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in FILES.items()}
    save_taxonomy(ds.taxonomy, paths["taxonomy"])
    save_annotations(ds.observed, paths["observed"])
    save_annotations(ds.truth, paths["truth"])
    write_features(ds.features, paths["features"])
    save_rates(ds.true_rates, paths["rates"])
    return paths


def read_dataset(data_dir) -> SynthDataset:
    d = Path(data_dir)
    tax = load_taxonomy(d / FILES["taxonomy"])
    c = tax.num_classes
    truth_path = d / FILES["truth"]
    observed = load_annotations(d / FILES["observed"], c)
    truth = load_annotations(truth_path, c) if truth_path.exists() else observed
    rates_path = d / FILES["rates"]
    true_rates = load_rates(rates_path, c) if rates_path.exists() else np.zeros((c, c))
    features = read_features(d / FILES["features"])
    if len(features) != len(observed) or len(truth) != len(observed):
        raise ValueError(f"{d}: features and annotations have different lengths")
    return SynthDataset(features, observed, truth, tax, true_rates)
