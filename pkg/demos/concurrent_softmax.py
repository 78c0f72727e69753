"""
Concurrent softmax on a two-label example
=========================================

A logit vector where two classes are both correct, e.g. a leaf class and
a confusable sibling that annotators often pick instead.
"""

import numpy as np

from multilabel_imbalance import concurrent_softmax_ce, concurrent_softmax_infer, softmax_ce, softmax_probs

z = np.array([5.0, 4.0, -5.0])
y = np.array([1.0, 1.0, 0.0])

# Summed softmax cross-entropy makes the two labels compete for the same
# probability mass, so the larger logit is pushed *down*.
vanilla = softmax_ce(z, y)
print("softmax CE gradient:     ", np.round(vanilla.gradient, 5))

# The concurrent loss drops the other label from each denominator. Both
# label gradients are now negative.
concurrent = concurrent_softmax_ce(z, y, np.zeros((3, 3)))
print("concurrent CE gradient:  ", np.round(concurrent.gradient, 8))

# A concurrent rate r[i, j] weakens class j's suppression of class i. With
# r[0, 1] = 0.5, class 0 scores higher at inference than under softmax.
z = np.array([2.0, 1.0, 0.0])
r = np.zeros((3, 3))
r[0, 1] = 0.5
print("softmax scores:          ", np.round(softmax_probs(z), 5))
print("concurrent scores:       ", np.round(concurrent_softmax_infer(z, r), 5))

# Setting r = 1 in both directions between a leaf and its parent removes
# their mutual suppression: each is scored as if the other were absent.
r = np.zeros((3, 3))
r[0, 1] = r[1, 0] = 1.0
print("leaf/parent unsuppressed:", np.round(concurrent_softmax_infer(z, r), 5))
