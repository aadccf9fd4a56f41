"""Per-layer gradients of the loss and a finite-difference check."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import Problem, WeightStack, forward


@dataclass(frozen=True)
class GradientStack:
    grads: tuple

    @property
    def norm_sq(self) -> float:
        """``sum_l ||G_l||_F^2``."""
        return float(sum(np.sum(g * g) for g in self.grads))

    def __iter__(self):
        return iter(self.grads)

    def __getitem__(self, i):
        return self.grads[i]

    def __len__(self):
        return len(self.grads)


def stack_gradients(ws, M, Y, m):
    """Gradients for raw weight matrices ``ws`` against ``M = (X S^H)[:, I]``.

    Returns ``(grads, loss_value)``.  With ``E = (2/m)(P M - Y) M^T`` and ``P``
    the collapsed product, ``G_l = (W_{H+1}..W_{l+1})^T E (W_{l-1}..W_1)^T``.
    """
    L = len(ws)
    below = [None] * L          # below[l] = W_{l-1} ... W_1 (None = identity)
    acc = None
    for l in range(L):
        below[l] = acc
        acc = ws[l] if acc is None else ws[l] @ acc
    R = acc @ M - Y
    value = float(np.sum(R * R)) / m
    E = (2.0 / m) * (R @ M.T)
    grads = [None] * L
    above = None                # W_{H+1} ... W_{l+1}
    for l in range(L - 1, -1, -1):
        G = E if above is None else above.T @ E
        if below[l] is not None:
            G = G @ below[l].T
        grads[l] = G
        above = ws[l] if above is None else above @ ws[l]
    return grads, value


def gradients(W: WeightStack, prob: Problem) -> GradientStack:
    prob.check_stack(W)
    grads, _ = stack_gradients(W.weights, prob.restricted, prob.Y, prob.m)
    return GradientStack(tuple(grads))


def _forward_loss(ws, prob):
    R = forward(WeightStack(tuple(ws)), prob)[:, list(prob.labeled)] - prob.Y
    return float(np.sum(R * R)) / prob.m


def fd_gradient(W: WeightStack, prob: Problem, h: float = 1e-3) -> GradientStack:
    """Central differences ``(L(w + h) - L(w - h)) / 2h`` for every scalar weight.

    The loss is evaluated through the layer-by-layer forward pass, so this
    shares no code with :func:`gradients`.  Along a single weight entry the
    collapsed product is affine, so the loss is quadratic and the central
    difference has no truncation error; ``h`` only sets the rounding error
    ``~ eps * L / h``, which is why it is not taken tiny.
    """
    prob.check_stack(W)
    base = [np.array(w) for w in W.weights]
    out = []
    for l, w in enumerate(base):
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = _forward_loss(base, prob)
            w[idx] = orig - h
            down = _forward_loss(base, prob)
            w[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return GradientStack(tuple(out))


def max_relative_error(a: GradientStack, b: GradientStack, rel_floor: float = 1e-4,
                       abs_floor: float = 1e-12) -> float:
    """``max |a - b| / max(|a|, |b|, floor)`` over all entries of all layers.

    ``floor = max(rel_floor * max|a|, abs_floor)``: entries far below the
    largest gradient entry are compared against that scale, since central
    differences carry an absolute rounding error of order ``eps * L / h``.
    """
    scale = max((float(np.max(np.abs(x))) for x in a if x.size), default=0.0)
    floor = max(rel_floor * scale, abs_floor)
    worst = 0.0
    for x, y in zip(a, b):
        if x.size:
            den = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
            worst = max(worst, float(np.max(np.abs(x - y) / den)))
    return worst
