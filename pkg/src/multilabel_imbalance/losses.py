"""Classification losses and scoring functions over logit vectors.

Every loss takes logits ``z`` and multi-hot targets ``y`` of shape ``(C,)``
or ``(B, C)`` and returns a :class:`LossResult` holding the value and the
analytic gradient with respect to ``z``. For batched input the default
reduction is the mean over rows; ``reduction="none"`` returns per-row values
and unscaled per-row gradients.

Concurrent softmax
------------------
Training score for a ground-truth class ``i``::

    s*_i = exp(z_i) / (sum_{j != i} (1 - y_j)(1 - r_ij) exp(z_j) + exp(z_i))

Other ground-truth classes drop out of the denominator and the competitors
are down-weighted by the concurrent rate ``r``. Inference score::

    s+_i = exp(z_i) / sum_j (1 - r_ij) exp(z_j)      (r_ii = 0)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAD_MODES = ("exact", "as_published")


class NumericalDomainError(FloatingPointError):
    """A softmax denominator underflowed to zero."""


@dataclass
class LossResult:
    value: float | np.ndarray
    gradient: np.ndarray


def _as_batch(z, y=None):
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    if y is None:
        return single, z2, None
    y2 = np.atleast_2d(np.asarray(y, dtype=float))
    if y2.shape != z2.shape:
        raise ValueError(f"logits {z2.shape} and labels {y2.shape} differ in shape")
    return single, z2, y2


def _reduce(single, values, grads, reduction):
    if single:
        return LossResult(float(values[0]), grads[0])
    if reduction == "mean":
        return LossResult(float(values.mean()), grads / len(values))
    if reduction == "sum":
        return LossResult(float(values.sum()), grads)
    if reduction == "none":
        return LossResult(values, grads)
    raise ValueError(f"unknown reduction {reduction!r}")


def _suppression(r, num_classes):
    """``1 - r`` with the diagonal forced to 1 (``r_ii = 0``)."""
    r = np.asarray(r, dtype=float)
    if r.shape != (num_classes, num_classes):
        raise ValueError(f"rate matrix shape {r.shape} does not match {num_classes} classes")
    a = 1.0 - r
    np.fill_diagonal(a, 1.0)
    return a


def softmax_probs(z) -> np.ndarray:
    """Row-wise softmax with max-subtraction."""
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_ce(z, y, class_weights=None, reduction: str = "mean") -> LossResult:
    """Softmax cross-entropy summed over every ground-truth label.

    With ``m`` labels the gradient is ``m * p_i - 1`` on labels and
    ``m * p_i`` elsewhere. ``class_weights`` scales each label's term.
    """
    single, z2, y2 = _as_batch(z, y)
    yw = y2 if class_weights is None else y2 * np.asarray(class_weights, dtype=float)
    logp = log_softmax(z2)
    values = -(yw * logp).sum(axis=1)
    grads = yw.sum(axis=1, keepdims=True) * np.exp(logp) - yw
    return _reduce(single, values, grads, reduction)


def _concurrent_terms(z2, y2, r):
    a = _suppression(r, z2.shape[1])
    shift = z2.max(axis=1, keepdims=True)
    e = np.exp(z2 - shift)
    # d[b, i] = sum_j a_ij (1 - y_j) e_j  +  y_i e_i; the j = i term only
    # survives for i outside the label set, where it equals e_i
    d = ((1.0 - y2) * e) @ a.T + y2 * e
    return a, shift, e, d


def concurrent_softmax_ce(
    z, y, r, grad_mode: str = "exact", reduction: str = "mean"
) -> LossResult:
    """Concurrent softmax training loss ``-sum_{i in K} log s*_i``.

    ``grad_mode="exact"`` returns the analytic derivative of the loss. For a
    non-label class ``i`` it is ``sum_{k in K} (1 - r_ki) exp(z_i) / D_k``.
    ``grad_mode="as_published"`` instead uses ``sum_{j in K} (1 - r_ij) s*_i``
    with ``s*_i = exp(z_i) / D_i``, which is not the derivative of the loss.
    Label classes get ``s*_i - 1`` in both modes.
    """
    if grad_mode not in GRAD_MODES:
        raise ValueError(f"unknown grad_mode {grad_mode!r}")
    single, z2, y2 = _as_batch(z, y)
    if np.any(y2.sum(axis=1) < 1):
        raise ValueError("concurrent softmax needs at least one label per row")
    a, shift, e, d = _concurrent_terms(z2, y2, r)
    pos = y2 > 0
    if np.any(d[pos] <= 0):
        raise NumericalDomainError("concurrent softmax denominator underflowed")
    log_d = np.log(np.where(pos, d, 1.0))
    values = (y2 * (log_d - (z2 - shift))).sum(axis=1)
    s_star = np.divide(e, d, out=np.zeros_like(e), where=d > 0)
    if grad_mode == "exact":
        inv_d = np.where(pos, 1.0 / np.where(pos, d, 1.0), 0.0)
        neg = e * (inv_d @ a)
    else:
        neg = s_star * (y2 @ a.T)
    grads = np.where(pos, s_star - 1.0, neg)
    return _reduce(single, values, grads, reduction)


def concurrent_softmax_infer(z, r) -> np.ndarray:
    """Inference scores ``exp(z_i) / sum_j (1 - r_ij) exp(z_j)``, in (0, 1]."""
    z = np.asarray(z, dtype=float)
    a = _suppression(r, z.shape[-1])
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    d = e @ a.T
    if np.any(d <= 0):
        raise NumericalDomainError("concurrent softmax denominator underflowed")
    return e / d


def bce_loss(z, y, reduction: str = "mean") -> LossResult:
    """Per-class sigmoid cross-entropy, summed over classes."""
    single, z2, y2 = _as_batch(z, y)
    # log(1 + e^z) - y z
    values = (np.logaddexp(0.0, z2) - y2 * z2).sum(axis=1)
    grads = _sigmoid(z2) - y2
    return _reduce(single, values, grads, reduction)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def focal_loss(z, y, gamma: float = 2.0, alpha: float = 0.25, reduction: str = "mean") -> LossResult:
    """Alpha-balanced sigmoid focal loss summed over classes.

    Positives contribute ``-alpha (1-p)^gamma log p``, negatives
    ``-(1-alpha) p^gamma log(1-p)`` with ``p = sigmoid(z)``.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    single, z2, y2 = _as_batch(z, y)
    log_p = -np.logaddexp(0.0, -z2)
    log_q = -np.logaddexp(0.0, z2)
    p, q = np.exp(log_p), np.exp(log_q)
    qg, pg = q**gamma, p**gamma
    pos = -alpha * qg * log_p
    neg = -(1.0 - alpha) * pg * log_q
    values = (y2 * pos + (1.0 - y2) * neg).sum(axis=1)
    g_pos = alpha * qg * (gamma * p * log_p - q)
    g_neg = (1.0 - alpha) * pg * (p - gamma * q * log_q)
    grads = y2 * g_pos + (1.0 - y2) * g_neg
    return _reduce(single, values, grads, reduction)


def effective_number_weights(counts, beta: float) -> np.ndarray:
    """Class weights ``(1 - beta) / (1 - beta**n_i)`` rescaled to mean 1.

    Classes with ``n_i = 0`` get weight 0 and are left out of the mean.
    """
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    n = np.asarray(counts, dtype=float)
    present = n > 0
    if not present.any():
        raise ValueError("all class counts are zero")
    w = np.zeros_like(n)
    w[present] = (1.0 - beta) / (1.0 - beta ** n[present])
    return w / w[present].mean()
