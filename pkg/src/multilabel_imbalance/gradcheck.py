"""Central finite-difference checks for the analytic loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses


def numerical_gradient(loss_fn, z, y, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn(z, y)`` with respect to ``z``.

    ``loss_fn`` must accept ``reduction="none"`` so all ``2C`` perturbed
    logit vectors are evaluated in one batched call.
    """
    z = np.asarray(z, dtype=float)
    c = z.size
    step = h * np.eye(c)
    ys = np.tile(y, (c, 1))
    up = loss_fn(z + step, ys, reduction="none").value
    down = loss_fn(z - step, ys, reduction="none").value
    return (up - down) / (2 * h)


def relative_error(analytic, numeric, floor: float = 1e-4) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)``.

    The floor keeps vanishing gradients (e.g. every class a label, loss
    identically 0) from turning finite-difference roundoff into a large
    ratio.
    """
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


@dataclass
class GradcheckResult:
    name: str
    trials: int
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def _random_case(rng, max_classes):
    c = int(rng.integers(2, max_classes + 1))
    z = rng.uniform(-5, 5, size=c)
    m = int(rng.integers(1, min(c, 4) + 1))
    y = np.zeros(c)
    y[rng.choice(c, size=m, replace=False)] = 1.0
    r = rng.uniform(0, 1, size=(c, c)) * (rng.uniform(size=(c, c)) < 0.3)
    np.fill_diagonal(r, 0.0)
    return z, y, r


def run_suite(num_classes: int = 20, trials: int = 1000, seed: int = 0,
              h: float = 1e-5, tol: float = 1e-5) -> list[GradcheckResult]:
    """Check every loss on ``trials`` random cases with up to ``num_classes`` classes.

    Logits are uniform on [-5, 5], label sets hold 1-4 classes, rate matrices
    are sparse uniform.
    """
    rng = np.random.default_rng(seed)
    worst = {"concurrent_softmax_ce": 0.0, "softmax_ce": 0.0, "bce": 0.0, "focal": 0.0}
    for _ in range(trials):
        z, y, r = _random_case(rng, num_classes)
        gamma, alpha = rng.uniform(0, 3), rng.uniform(0, 1)

        def conc(zz, yy, reduction="mean"):
            return losses.concurrent_softmax_ce(zz, yy, r, "exact", reduction=reduction)

        def focal(zz, yy, reduction="mean"):
            return losses.focal_loss(zz, yy, gamma, alpha, reduction=reduction)

        cases = {
            "concurrent_softmax_ce": (conc, y),
            "softmax_ce": (losses.softmax_ce, y),
            "bce": (losses.bce_loss, y),
            "focal": (focal, y),
        }
        for name, (fn, target) in cases.items():
            err = relative_error(fn(z, target).gradient, numerical_gradient(fn, z, target, h))
            worst[name] = max(worst[name], err)
    return [GradcheckResult(name, trials, err, tol) for name, err in worst.items()]
