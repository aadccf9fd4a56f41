"""Initializations with a convergence certificate.

Two constructions are provided: the scaled "diagonal" start with a zero first
layer, whose rate constant is known in closed form, and a balanced
factorization of a prescribed end-to-end matrix.  :func:`validate_init`
evaluates the sufficient condition under which gradient flow stays in a ball
around the start and converges exponentially.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .gnn import Problem, WeightStack, check_dims, global_min_loss, loss
from .linalg import (
    balancedness_residual,
    column_space_projector,
    numerical_rank,
    rect_diag,
    sigma_min,
    sigma_small,
    singular_values,
    svd,
)


@dataclass(frozen=True)
class InitReport:
    beta: float
    r: float
    alpha_lower: float
    condition_lhs: float
    condition_rhs: float
    valid: bool
    sigma_small: float
    loss0: float
    loss_min: float
    m: int
    H: int
    balance_residual: float
    balanced: bool
    # Only meaningful when ``balanced`` is true.
    balanced_rank: Optional[int] = None
    balanced_lhs: Optional[float] = None
    balanced_rhs: Optional[float] = None
    balanced_valid: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


def theorem_init(dims: Sequence[int], a: float) -> WeightStack:
    """``W_1 = 0``, unit rectangular diagonals for ``W_2..W_H``, ``a`` on the diagonal of ``W_{H+1}``."""
    dims = check_dims(dims)
    if not a > 0:
        raise ParameterError(f"a must be positive, got {a}")
    H = len(dims) - 2
    ws = [np.zeros((dims[1], dims[0]))]
    for l in range(2, H + 1):
        ws.append(rect_diag(dims[l], dims[l - 1], 1.0))
    ws.append(rect_diag(dims[H + 1], dims[H], float(a)))
    return WeightStack(tuple(ws))


def rate_constant(W: WeightStack) -> float:
    """``beta = 4^{-(H-1)} prod_{l>=2} sigma_min(W_l)^2``."""
    prod = 1.0
    for w in W.weights[1:]:
        prod *= sigma_min(w) ** 2
    return prod / 4.0 ** (W.H - 1)


def min_admissible_a(prob: Problem) -> float:
    """Smallest diagonal value ``a`` for which :func:`theorem_init` is certified.

    ``a^2 = max(1, 4^{H+1} m (L(W(0)) - L_min) / sigma_small(M)^2)`` where the
    initial loss is ``||Y||_F^2 / m`` because the first layer is zero.
    """
    sig = sigma_small(prob.restricted)
    gap = max(float(np.sum(prob.Y ** 2)) / prob.m - global_min_loss(prob), 0.0)
    a2 = max(1.0, 4.0 ** (prob.H + 1) * prob.m * gap / sig ** 2)
    return math.sqrt(a2)


def balanced_init(dims: Sequence[int], target, prob: Optional[Problem] = None) -> WeightStack:
    """Balanced stack whose collapsed product is ``target``.

    With ``target = U diag(s) V^T`` (rank ``r``), every layer carries the
    singular values ``s^{1/(H+1)}``::

        W_1 = Q_1 s' V^T,   W_l = Q_l s' Q_{l-1}^T,   W_{H+1} = U s' Q_H^T

    where ``Q_l`` are the first ``r`` columns of the ``d_l`` identity.  If
    ``prob`` is given, ``target`` is first projected onto the column space of
    ``(X S^H)[:, I]`` so that ``W_1`` vanishes on the trailing left singular
    directions of that matrix; minimum-norm solutions are unchanged by this.
    """
    dims = check_dims(dims)
    H = len(dims) - 2
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if target.shape != (dims[-1], dims[0]):
        raise ShapeError(f"target must be {dims[-1]} x {dims[0]}, got {target.shape}")
    if dims[-1] > min(dims[1:-1]):
        raise ParameterError(f"need d_y <= every hidden width, got {dims}")
    if prob is not None:
        if prob.d_x != dims[0] or prob.d_y != dims[-1] or prob.H != H:
            raise ShapeError("dims do not match the problem")
        target = target @ column_space_projector(prob.restricted)
    dec = svd(target)
    r = dec.rank
    if r > min(dims[1:-1]):
        raise ParameterError(f"target rank {r} exceeds the narrowest hidden width")
    s = dec.sigma[:r] ** (1.0 / (H + 1))
    Q = [np.eye(d)[:, :r] for d in dims[1:-1]]
    ws = [(Q[0] * s) @ dec.V[:, :r].T]
    for l in range(1, H):
        ws.append((Q[l] * s) @ Q[l - 1].T)
    ws.append((dec.U[:, :r] * s) @ Q[H - 1].T)
    return WeightStack(tuple(ws))


# Relative slack on the certificate inequalities; the minimal admissible start
# sits exactly on the boundary.
_ROUNDING = 1e-9


def validate_init(W0: WeightStack, prob: Problem, balance_tol: float = 1e-8) -> InitReport:
    """Evaluate the sufficient condition ``4 (L(W0) - L_min) <= r^2 beta sigma^2 / m``.

    ``r`` is half the smallest ``sigma_min(W_l(0))`` over ``l >= 2``.  For a
    balanced start the alternative condition
    ``L(W0) - L_min <= sigma_k(W_1)^{2H} sigma^2 / (4^{H+1} m)`` with
    ``k = min(d_y, rank M)`` is evaluated as well.  Never raises on an
    inadmissible start; ``valid`` is simply false.
    """
    prob.check_stack(W0)
    H, m = W0.H, prob.m
    M = prob.restricted
    sig = sigma_small(M) if numerical_rank(M) else 0.0
    beta = rate_constant(W0)
    r = min(sigma_min(w) for w in W0.weights[1:]) / 2.0
    alpha = beta * sig ** 2 / m
    L0 = loss(W0, prob)
    Lmin = global_min_loss(prob)
    gap = max(L0 - Lmin, 0.0)
    lhs = 4.0 * gap
    rhs = r ** 2 * alpha
    res = balancedness_residual(W0)
    scale = max(1.0, max(float(np.sum(w * w)) for w in W0.weights))
    balanced = res <= balance_tol * scale
    extra = {}
    if balanced:
        kbar = min(prob.d_y, numerical_rank(M))
        sv = singular_values(W0.weights[0])
        sk = float(sv[kbar - 1]) if 0 < kbar <= sv.size else 0.0
        brhs = sk ** (2 * H) * sig ** 2 / (4.0 ** (H + 1) * m)
        extra = dict(balanced_rank=kbar, balanced_lhs=gap, balanced_rhs=brhs,
                     balanced_valid=bool(gap <= brhs * (1 + _ROUNDING)))
    return InitReport(beta=beta, r=r, alpha_lower=alpha, condition_lhs=lhs, condition_rhs=rhs,
                      valid=bool(lhs <= rhs * (1 + _ROUNDING)), sigma_small=sig, loss0=L0, loss_min=Lmin, m=m, H=H,
                      balance_residual=res, balanced=bool(balanced), **extra)
