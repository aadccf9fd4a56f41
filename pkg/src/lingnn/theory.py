"""Closed-form rate constants, bound curves and spectral predictors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ParameterError
from .gnn import Problem, WeightStack, min_norm_solution, propagate
from .init import rate_constant
from .linalg import numerical_rank, sigma_small, svd


@dataclass(frozen=True)
class RateBundle:
    sigma_small_restricted: float
    beta: float
    alpha_lower: float
    m: int

    @property
    def flow_rate(self) -> float:
        """Exponent per unit time in the gradient-flow bound."""
        return self.alpha_lower

    def descent_factor(self, eta: float) -> float:
        """Per-iteration contraction ``1 - eta alpha / 2`` of the descent bound."""
        return 1.0 - eta * self.alpha_lower / 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flow_rate"] = self.flow_rate
        return d


def rate_bundle(W0: WeightStack, prob: Problem) -> RateBundle:
    prob.check_stack(W0)
    M = prob.restricted
    sig = sigma_small(M) if numerical_rank(M) else 0.0
    beta = rate_constant(W0)
    return RateBundle(sig, beta, beta * sig ** 2 / prob.m, prob.m)


def flow_bound_curve(bundle: RateBundle, L0: float, L_tilde: float,
                     ts: Iterable[float]) -> list[tuple[float, float]]:
    """``[(t, exp(-alpha t) (L0 - L_tilde))]``."""
    if L0 < L_tilde:
        raise ParameterError(f"initial loss {L0} is below the minimum {L_tilde}")
    gap = L0 - L_tilde
    return [(float(t), math.exp(-bundle.alpha_lower * t) * gap) for t in ts]


def energy_min_value(prob: Problem, H: Optional[int] = None) -> float:
    """Least total energy ``sum_l ||W_l||_F^2`` over stacks whose product is ``Y M^+``.

    Equals ``(H+1) sum_i sigma_i(Y M^+)^{2/(H+1)}`` over the numerically
    non-zero singular values.  Rounding-level singular values are dropped:
    the fractional power would otherwise inflate them to a visible size.
    """
    H = prob.H if H is None else int(H)
    dec = svd(min_norm_solution(prob))
    s = dec.sigma[: dec.rank]
    return float((H + 1) * np.sum(s ** (2.0 / (H + 1))))


def expected_sigma_small(X, S, H: int, n_bar: int) -> float:
    """Predicted mean of ``sigma_small((X S^H)[:, I])`` over uniform ``|I| = n_bar``.

    The prediction ``(n_bar / n) sigma_small(X S^H)`` is only made for
    ``n_bar >= d_x``; below that it returns ``nan``.
    """
    X = np.asarray(X, dtype=np.float64)
    d_x, n = X.shape
    if not 1 <= n_bar <= n:
        raise ParameterError(f"n_bar must lie in [1, {n}], got {n_bar}")
    if n_bar < d_x:
        return float("nan")
    return n_bar / n * sigma_small(propagate(X, S, H))


def depth_scaling_estimate(prob: Problem, H: Optional[int] = None) -> float:
    """Heuristic ``|lambda_{d_x}(S)|^{H-1} sigma_small(X S)``.

    ``lambda_{d_x}`` is the ``d_x``-th largest eigenvalue of ``S`` in magnitude.
    Diagnostic only.
    """
    H = prob.H if H is None else int(H)
    if prob.d_x > prob.n:
        raise ParameterError(f"d_x={prob.d_x} exceeds the node count {prob.n}")
    lam = np.sort(np.abs(np.linalg.eigvals(prob.shift)))[::-1][prob.d_x - 1]
    return float(lam ** (H - 1) * sigma_small(prob.X @ prob.shift))
