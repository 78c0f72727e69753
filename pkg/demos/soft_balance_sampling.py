"""
Soft-balance sampling on a long-tailed label set
================================================

Class sampling probabilities interpolate between the data frequency
(lambda = 0) and uniform class-aware sampling (lambda = 1).
"""

import numpy as np

from multilabel_imbalance import annotations_from_labels, build_plan, exposure_report, plan_entropy, sample_batch
from multilabel_imbalance.synth import allocate, power_law_frequencies

# Ten classes, the head 100x more frequent than the tail.
counts = allocate(5000, power_law_frequencies(10, 100.0))
labels = [{c} for c, n in enumerate(counts) for _ in range(n)]
ann = annotations_from_labels(labels, 10)
print("images per class:", counts.tolist())

for lam in (0.0, 0.3, 0.7, 1.0):
    plan = build_plan(ann, lam)
    visits = exposure_report(plan).visits_per_image
    print(
        f"lambda={lam:.1f}  head p={plan.p_s_norm[0]:.3f}  tail p={plan.p_s_norm[-1]:.3f}"
        f"  entropy={plan_entropy(plan):.3f}  head visits/epoch={visits[0]:.2f}"
        f"  tail visits/epoch={visits[-1]:.1f}"
    )

# lambda = 0.7 keeps most of the head's share while visiting tail images
# several times per epoch instead of several dozen (lambda = 1).
plan = build_plan(ann, 0.7)
batch = sample_batch(plan, 16, seed=0)
print("one batch:", batch[:6], "...")

# A fixed seed reproduces the batch exactly.
assert batch == sample_batch(plan, 16, seed=0)
print("tail share in 10k draws:",
      np.mean([img in set(plan.class_images[-1]) for img in sample_batch(plan, 10_000, seed=1)]))
