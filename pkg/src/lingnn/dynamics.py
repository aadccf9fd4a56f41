"""Gradient flow, normalized gradient flow and gradient descent.

The flows are integrated with explicit Euler steps whose length is adapted by
a sufficient-decrease test: a step ``W -> W - h D`` is accepted iff

    L(W - h D) <= L(W) - c h <G, D>,        c = 0.5,

which for ``D = G`` is the discrete descent inequality ``h |G|^2 / 2 <= L(W) - L(W')``.
Rejected steps halve ``h``; accepted ones let it grow by 1.5 up to ``h_max``.
Every accepted trajectory therefore has a non-increasing loss.

Because first-order terms cancel, an Euler step changes the balancedness
residual only by ``h^2 (G_l G_l^T - G_{l+1}^T G_{l+1})``, whose norm is at most
``h^2 |G|^2``.  Hence for the plain flow and for descent

    balance_residual(t) <= balance_residual(0) + sum_step_sq(t),

with ``sum_step_sq`` the accumulated ``sum_k h_k^2 |D_k|^2`` recorded in every
sample.  Adaptive steps near the stability limit let this sum reach about
``1e-3 max_l |W_l|^2``; ``max_step_norm = s`` caps each step length so that the
sum stays below ``s`` times the path length.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import ParameterError
from .gnn import Problem, WeightStack, global_min_loss
from .grad import stack_gradients
from .linalg import balancedness_residual


class Status(enum.Enum):
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget_exhausted"
    STEP_UNDERFLOW = "step_underflow"


class Sample(NamedTuple):
    t: float
    loss: float
    rel_loss: float
    grad_norm_sq: float
    balance_residual: float
    step: float
    dist_sq: float
    sum_step_sq: float


SAMPLE_FIELDS = Sample._fields


@dataclass(frozen=True)
class DynamicsOptions:
    tol: float = 1e-10          # stop once the relative loss is at most this
    h0: float = 1e-3
    h_max: float = 1.0
    h_min: float = 1e-14
    c: float = 0.5
    grow: float = 1.5
    shrink: float = 0.5
    max_steps: int = 1_000_000
    max_samples: int = 10_000   # every accepted step is kept up to this many
    thin_ratio: float = 1.05    # afterwards, keep steps on a geometric grid
    max_step_norm: Optional[float] = None
    eta0: float = 1.0           # first trial stepsize for automatic descent

    def with_(self, **kw) -> "DynamicsOptions":
        return replace(self, **kw)


@dataclass(frozen=True)
class Trajectory:
    samples: tuple
    final_weights: WeightStack
    status: Status
    method: str
    loss_min: float
    steps: int
    monotone: bool = True
    eta: Optional[float] = None
    contraction: tuple = ()     # per-iteration (L_{k+1} - L_min) / (L_k - L_min), descent only

    def column(self, name: str) -> np.ndarray:
        i = SAMPLE_FIELDS.index(name)
        return np.array([s[i] for s in self.samples])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    @property
    def rel_loss(self) -> np.ndarray:
        return self.column("rel_loss")

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    def time_to(self, rel: float) -> Optional[float]:
        """First recorded time (or iteration) with ``rel_loss <= rel``."""
        for s in self.samples:
            if s.rel_loss <= rel:
                return s.t
        return None


class _Recorder:
    def __init__(self, opts, w0, loss_min, gap0):
        self.opts = opts
        self.w0 = w0
        self.loss_min = loss_min
        self.gap0 = gap0
        self.samples = []
        self.next_mark = opts.max_samples
        self.last = None

    def rel(self, L):
        return (L - self.loss_min) / self.gap0 if self.gap0 > 0 else 0.0

    def _make(self, t, ws, L, gn2, step, sq):
        dist = float(sum(np.sum((a - b) ** 2) for a, b in zip(ws, self.w0)))
        return Sample(float(t), float(L), float(self.rel(L)), float(gn2),
                      balancedness_residual(ws), float(step), dist, float(sq))

    def offer(self, k, t, ws, L, gn2, step, sq):
        """Record step ``k`` if the sampling schedule asks for it."""
        if k <= self.opts.max_samples or k >= self.next_mark:
            self.samples.append(self._make(t, ws, L, gn2, step, sq))
            if k > self.opts.max_samples:
                self.next_mark = max(k + 1, math.ceil(self.next_mark * self.opts.thin_ratio))
            self.last = None
        else:
            self.last = (t, ws, L, gn2, step, sq)

    def finish(self):
        if self.last is not None:
            self.samples.append(self._make(*self.last))
            self.last = None
        return tuple(self.samples)


def _norm_sq(mats):
    return float(sum(np.sum(g * g) for g in mats))


def _check(W0, prob, T_max=None):
    prob.check_stack(W0)
    if T_max is not None and not T_max > 0:
        raise ParameterError(f"T_max must be positive, got {T_max}")


def _integrate(W0, prob, T_max, opts, normalized):
    M, Y, m = prob.restricted, prob.Y, prob.m
    loss_min = global_min_loss(prob)
    ws = [np.array(w) for w in W0.weights]
    G, L = stack_gradients(ws, M, Y, m)
    rec = _Recorder(opts, [w.copy() for w in ws], loss_min, L - loss_min)
    rec.offer(0, 0.0, ws, L, _norm_sq(G), 0.0, 0.0)
    t, h, k = 0.0, min(opts.h0, opts.h_max), 0
    sq = 0.0
    status = None
    while status is None:
        if rec.rel(L) <= opts.tol:
            status = Status.CONVERGED
            break
        if T_max - t <= 1e-15 * T_max or k >= opts.max_steps:
            status = Status.BUDGET_EXHAUSTED
            break
        if normalized:
            D = []
            for g in G:
                nrm = float(np.linalg.norm(g))
                D.append(g / nrm if nrm > 1e-14 else np.zeros_like(g))
        else:
            D = G
        slope = float(sum(np.sum(g * d) for g, d in zip(G, D)))
        if slope <= 0.0:
            # stationary point: nothing left to integrate
            status = Status.CONVERGED
            break
        h = min(h, T_max - t)
        dn2 = _norm_sq(D)
        if opts.max_step_norm is not None:
            h = min(h, opts.max_step_norm / math.sqrt(dn2))
        while True:
            trial = [w - h * d for w, d in zip(ws, D)]
            Gn, Ln = stack_gradients(trial, M, Y, m)
            if Ln <= L - opts.c * h * slope:
                break
            h *= opts.shrink
            if h < opts.h_min:
                status = Status.STEP_UNDERFLOW
                break
        if status is not None:
            break
        ws, G, L = trial, Gn, Ln
        t += h
        k += 1
        sq += h * h * dn2
        rec.offer(k, t, ws, L, _norm_sq(G), h, sq)
        h = min(h * opts.grow, opts.h_max)
    return Trajectory(rec.finish(), WeightStack(tuple(ws)), status,
                      "normalized-flow" if normalized else "flow", loss_min, k)


def flow_integrate(W0: WeightStack, prob: Problem, T_max: float,
                   opts: Optional[DynamicsOptions] = None) -> Trajectory:
    """Integrate ``dW_l/dt = -dL/dW_l`` up to time ``T_max``."""
    _check(W0, prob, T_max)
    return _integrate(W0, prob, float(T_max), opts or DynamicsOptions(), normalized=False)


def normalized_flow_integrate(W0: WeightStack, prob: Problem, T_max: float,
                              opts: Optional[DynamicsOptions] = None) -> Trajectory:
    """Integrate ``dW_l/dt = -G_l / ||G_l||_F``; layers with ``||G_l|| <= 1e-14`` stay put.

    No exponential rate is guaranteed for this flow.
    """
    _check(W0, prob, T_max)
    return _integrate(W0, prob, float(T_max), opts or DynamicsOptions(), normalized=True)


def auto_stepsize(W0: WeightStack, prob: Problem, opts: Optional[DynamicsOptions] = None) -> float:
    """Halve ``opts.eta0`` until ``L(W0 - eta G) <= L(W0) - eta |G|^2 / 2``."""
    opts = opts or DynamicsOptions()
    M, Y, m = prob.restricted, prob.Y, prob.m
    ws = list(W0.weights)
    G, L = stack_gradients(ws, M, Y, m)
    gn2 = _norm_sq(G)
    eta = opts.eta0
    if gn2 == 0.0:
        return eta
    while True:
        _, Ln = stack_gradients([w - eta * g for w, g in zip(ws, G)], M, Y, m)
        # the slack absorbs rounding when W0 already sits at a minimizer
        if Ln <= L - opts.c * eta * gn2 + 1e-13 * L:
            return eta
        eta *= opts.shrink
        if eta < opts.h_min:
            raise ParameterError("no stepsize satisfies the sufficient-decrease test at W0")


def gradient_descent(W0: WeightStack, prob: Problem, eta="auto", k_max: int = 10_000,
                     opts: Optional[DynamicsOptions] = None) -> Trajectory:
    """Fixed-step iteration ``W^{k+1} = W^k - eta grad L(W^k)``.

    ``eta="auto"`` picks the stepsize once, by backtracking at ``W0``, and then
    keeps it fixed.  A user-supplied ``eta`` is applied as is; if the loss goes
    up the trajectory is flagged ``monotone=False`` and a non-finite loss ends
    the run with ``BUDGET_EXHAUSTED``.
    """
    opts = opts or DynamicsOptions()
    _check(W0, prob)
    if isinstance(eta, str):
        if eta != "auto":
            raise ParameterError(f"eta must be positive or 'auto', got {eta!r}")
        eta = auto_stepsize(W0, prob, opts)
    eta = float(eta)
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    M, Y, m = prob.restricted, prob.Y, prob.m
    loss_min = global_min_loss(prob)
    ws = [np.array(w) for w in W0.weights]
    G, L = stack_gradients(ws, M, Y, m)
    rec = _Recorder(opts, [w.copy() for w in ws], loss_min, L - loss_min)
    rec.offer(0, 0, ws, L, _norm_sq(G), 0.0, 0.0)
    rhos = []
    sq = 0.0
    monotone = True
    status = Status.BUDGET_EXHAUSTED
    k = 0
    # a fixed stepsize may diverge; non-finite losses are handled below
    with np.errstate(over="ignore", invalid="ignore"):
        while k < k_max:
            if rec.rel(L) <= opts.tol or _norm_sq(G) == 0.0:
                status = Status.CONVERGED
                break
            gn2 = _norm_sq(G)
            trial = [w - eta * g for w, g in zip(ws, G)]
            Gn, Ln = stack_gradients(trial, M, Y, m)
            if not math.isfinite(Ln):
                monotone = False
                break
            gap = L - loss_min
            rhos.append((Ln - loss_min) / gap if gap > 0 else 0.0)
            if Ln > L:
                monotone = False
            ws, G, L = trial, Gn, Ln
            k += 1
            sq += eta * eta * gn2
            rec.offer(k, k, ws, L, _norm_sq(G), eta, sq)
        else:
            if rec.rel(L) <= opts.tol:
                status = Status.CONVERGED
    return Trajectory(rec.finish(), WeightStack(tuple(ws)), status, "descent", loss_min, k,
                      monotone=monotone, eta=eta, contraction=tuple(rhos))


def iterations_to_epsilon(report, eta: float, L0: float, L_tilde: float, eps: float) -> int:
    """Iterations after which the descent bound guarantees ``L - L_min <= eps``.

    Smallest ``k >= log((L0 - L_min)/eps) / log(1 / (1 - eta alpha / 2))`` with
    ``alpha = beta sigma^2 / m`` taken from ``report`` (an :class:`InitReport`
    or anything with ``alpha_lower``).
    """
    alpha = float(report.alpha_lower)
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if not alpha > 0 or not (0 < eta < 2.0 / alpha):
        raise ParameterError(f"eta must lie in (0, 2/alpha) = (0, {2.0 / alpha if alpha > 0 else 0:g})")
    gap = L0 - L_tilde
    if gap <= eps:
        return 0
    q = eta * alpha / 2.0
    val = math.log(gap / eps) / -math.log1p(-q)
    return max(0, math.ceil(val * (1 - 1e-12)))
