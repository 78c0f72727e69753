"""
Estimating concurrent rates from noisy labels
=============================================

Generate a hierarchy with confused leaf pairs and parent-only labels,
estimate the concurrent-rate matrix from the observed annotations, then
train with the concurrent loss and score with and without the rates.
"""

from multilabel_imbalance import (
    LossSpec,
    SynthConfig,
    TrainPlan,
    estimate_rates,
    evaluate,
    generate,
    one_x_schedule,
    predict,
    split_indices,
    top_confused_pairs,
    train,
)

# Leaves 0/1 are confused 40% of the time in both directions and 2 is
# confused with 3 half the time. In "colabel" mode a confused object carries
# both labels, as when two annotators disagree. A third of the objects only
# get their parent labels.
pairs = ((0, 1, 0.4), (1, 0, 0.4), (2, 3, 0.5))
ds = generate(SynthConfig(num_leaf=40, num_parents=8, depth=3, images=20_000, separation=3.0,
                          confusion_pairs=pairs, parent_only_prob=0.3, flip_mode="colabel", seed=1))
names = ds.taxonomy.names

train_idx, val_idx = split_indices(len(ds), 0.25, seed=1)
train_set, val_set = ds.subset(train_idx), ds.subset(val_idx)

# Observed co-labels only; hierarchy pairs are set to 1 so a leaf and its
# ancestors never suppress one another. The estimates are per observed
# label, so they mix both confusion directions, weighted by class
# frequency, and a confused object also pulls in the other leaf's parent.
rates = estimate_rates(train_set.observed, ds.taxonomy, min_rate=0.1)
for i, j, r in top_confused_pairs(rates, 5, ds.taxonomy):
    print(f"  {names[i]:>9s} -> {names[j]:<9s} {r:.3f}")

plan = TrainPlan((one_x_schedule("balanced", 0.7),))
model = train(train_set, plan, LossSpec("concurrent"), rates=rates, seed=1).model
for mode in ("softmax", "concurrent"):
    report = evaluate(predict(model, val_set.features, mode, rates), val_set.truth)
    print(f"{mode:>10s} scoring: mAP {report.map:.4f}")
