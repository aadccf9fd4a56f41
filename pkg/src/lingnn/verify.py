"""Invariant suites run by ``lingnn verify``.

Every check builds its own random instances from a seed and returns a
:class:`CheckResult`; none of them raises on a failed property.  The sparsity
ordering check always runs at :data:`ORDERING_SEED`.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import DynamicsOptions, flow_integrate, gradient_descent, iterations_to_epsilon
from .gnn import (
    Problem,
    WeightStack,
    collapsed_product,
    forward,
    global_min_loss,
    loss,
    min_norm_solution,
)
from .grad import fd_gradient, gradients, max_relative_error
from .graph import erdos_renyi
from .init import balanced_init, min_admissible_a, theorem_init, validate_init
from .linalg import (
    balancedness_residual,
    numerical_rank,
    row_space_projector,
    sigma_min,
    sigma_small,
    singular_values,
)
from .shift import ShiftKind, build_shift
from .theory import energy_min_value, flow_bound_curve, rate_bundle

SHIFT_KINDS = tuple(k.value for k in ShiftKind)

# Seed of the fixed-seed sparsity ordering check: G(200, p) for
# p in (0.03, 0.1, 0.3), Laplacian shift, d_x = 50, dims (50, 32, 32, 1), a = 2.
ORDERING_SEED = 0
ORDERING_PS = (0.03, 0.1, 0.3)


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"check": self.name, "ok": self.ok, "detail": self.detail}


# ------------------------------------------------------------ instances

def random_dims(rng, H: int, max_dim: int = 8) -> tuple:
    d_x = int(rng.integers(1, max_dim + 1))
    d_y = int(rng.integers(1, max_dim + 1))
    hidden = sorted((int(v) for v in rng.integers(d_y, max_dim + 1, size=H)), reverse=True)
    return (d_x, *hidden, d_y)


def random_problem(rng, dims, n: Optional[int] = None, kind=None, n_bar=None, p: float = 0.4) -> Problem:
    """Random ``G(n, p)`` instance with Gaussian features and labels."""
    H = len(dims) - 2
    n = int(rng.integers(3, 16)) if n is None else int(n)
    kind = SHIFT_KINDS[int(rng.integers(len(SHIFT_KINDS)))] if kind is None else kind
    g = erdos_renyi(n, p, int(rng.integers(2 ** 31)))
    S = build_shift(g, kind)
    n_bar = int(rng.integers(1, n + 1)) if n_bar is None else int(n_bar)
    I = np.sort(rng.choice(n, size=n_bar, replace=False))
    X = rng.standard_normal((dims[0], n))
    Y = rng.standard_normal((dims[-1], n_bar))
    return Problem(X, S, H, Y, I)


def random_stack(rng, dims, scale: float = 1.0) -> WeightStack:
    return WeightStack(tuple(scale * rng.standard_normal((dims[i + 1], dims[i]))
                             for i in range(len(dims) - 1)))


def _fmt(x) -> str:
    return f"{x:.3g}"


# ---------------------------------------------------------------- linalg

def check_perturbation_lower_bound(seed: int, trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(trials):
        d = int(rng.integers(1, 7))
        dp = int(rng.integers(1, d + 1))
        P = rng.standard_normal((d, dp))
        s = sigma_min(P)
        E = rng.standard_normal((d, dp))
        E *= rng.uniform(0, 0.99) * s / np.linalg.norm(E)
        worst = min(worst, sigma_min(P + E) - (s - np.linalg.norm(E)))
    return CheckResult("linalg.perturbed_sigma_min", worst >= -1e-12, f"min slack {_fmt(worst)}")


def check_product_lower_bound(seed: int, trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(trials):
        d1, d2, d3 = sorted(int(v) for v in rng.integers(1, 7, size=3))[::-1]
        P, Q = rng.standard_normal((d1, d2)), rng.standard_normal((d2, d3))
        worst = min(worst, sigma_min(P @ Q) - sigma_min(P) * sigma_min(Q))
    return CheckResult("linalg.product_sigma_min", worst >= -1e-10, f"min slack {_fmt(worst)}")


def check_row_space_bound(seed: int, trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(trials):
        a, b = (int(v) for v in rng.integers(1, 8, size=2))
        k = int(rng.integers(1, min(a, b) + 1))
        R = rng.standard_normal((a, k)) @ rng.standard_normal((k, b))
        x = rng.standard_normal(b)
        lhs = np.linalg.norm(R @ x)
        rhs = sigma_small(R) * np.linalg.norm(row_space_projector(R) @ x)
        worst = min(worst, lhs - rhs + 1e-8)
    return CheckResult("linalg.row_space_bound", worst >= 0, f"min slack {_fmt(worst)}")


# ------------------------------------------------------------------ gnn

def check_loss_above_minimum(seed: int, instances: int = 10, stacks: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        prob = random_problem(rng, dims)
        Lmin = global_min_loss(prob)
        for _ in range(stacks):
            worst = min(worst, loss(random_stack(rng, dims, rng.uniform(0.1, 2)), prob) - Lmin)
    return CheckResult("gnn.loss_above_minimum", worst >= -1e-12, f"min gap {_fmt(worst)}")


def check_forward_collapsed(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 5)), 6)
        prob = random_problem(rng, dims, n=int(rng.integers(2, 21)))
        W = random_stack(rng, dims)
        a = forward(W, prob)
        b = collapsed_product(W) @ prob.propagated
        worst = max(worst, np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))
    return CheckResult("gnn.forward_equals_collapsed", worst <= 1e-10, f"max rel diff {_fmt(worst)}")


def check_reparameterization(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        prob = random_problem(rng, dims)
        W = list(random_stack(rng, dims).weights)
        l = int(rng.integers(0, len(W) - 1))
        d = W[l].shape[0]
        G = rng.standard_normal((d, d)) + 3 * np.eye(d)
        V = list(W)
        V[l] = G @ W[l]
        V[l + 1] = W[l + 1] @ np.linalg.inv(G)
        a, b = loss(WeightStack(tuple(W)), prob), loss(WeightStack(tuple(V)), prob)
        worst = max(worst, abs(a - b) / max(1.0, a))
    return CheckResult("gnn.loss_through_product", worst <= 1e-9, f"max rel diff {_fmt(worst)}")


def check_least_squares_oracle(seed: int, instances: int = 50) -> CheckResult:
    """Compare against the normal equations on a basis of the row space."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, 1)
        prob = random_problem(rng, dims)
        M, Y = prob.restricted, prob.Y
        # orthonormal basis of the row space from a QR of M^T with pivoting-free rank cut
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        k = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
        B = U[:, :k]
        A = B.T @ M                       # k x n_bar, full row rank
        C = np.linalg.solve(A @ A.T, A @ Y.T).T if k else np.zeros((Y.shape[0], 0))
        W_ref = C @ B.T
        L_ref = float(np.sum((W_ref @ M - Y) ** 2)) / prob.m
        worst = max(worst, abs(global_min_loss(prob) - L_ref),
                    float(np.max(np.abs(min_norm_solution(prob) - W_ref))))
    return CheckResult("gnn.least_squares_oracle", worst <= 1e-10, f"max abs diff {_fmt(worst)}")


# ----------------------------------------------------------------- grad

def check_fd_gradients(seed: int, instances: int = 40) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)), 6)
        prob = random_problem(rng, dims, n=int(rng.integers(3, 13)), kind=SHIFT_KINDS[i % len(SHIFT_KINDS)])
        W = random_stack(rng, dims)
        worst = max(worst, max_relative_error(gradients(W, prob), fd_gradient(W, prob)))
    return CheckResult("grad.finite_differences", worst <= 1e-5, f"max rel err {_fmt(worst)}")


def check_directional_derivative(seed: int, instances: int = 40) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)), 6)
        prob = random_problem(rng, dims)
        W = random_stack(rng, dims)
        D = random_stack(rng, dims)
        G = gradients(W, prob)
        exact = sum(float(np.sum(g * d)) for g, d in zip(G, D))
        L0 = loss(W, prob)

        def q(t):
            return (loss(WeightStack(tuple(w + t * d for w, d in zip(W, D))), prob) - L0) / t

        # forward differences are O(t); Richardson removes the leading term
        rich = (10 * q(1e-5) - q(1e-4)) / 9
        worst = max(worst, abs(rich - exact) / max(1.0, abs(exact)))
    return CheckResult("grad.directional_derivative", worst <= 1e-5, f"max rel err {_fmt(worst)}")


def check_conservation_law(seed: int, instances: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        prob = random_problem(rng, dims)
        W = random_stack(rng, dims)
        G = [-g for g in gradients(W, prob)]
        for l in range(len(W) - 1):
            lhs = G[l] @ W[l].T + W[l] @ G[l].T
            rhs = G[l + 1].T @ W[l + 1] + W[l + 1].T @ G[l + 1]
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / max(1.0, float(np.max(np.abs(lhs)))))
    return CheckResult("grad.balancedness_conservation", worst <= 1e-8, f"max rel diff {_fmt(worst)}")


# ----------------------------------------------------------------- init

def check_balanced_init(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_bal, worst_sv, worst_prod = 0.0, 0.0, 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        target = rng.standard_normal((dims[-1], dims[0]))
        W = balanced_init(dims, target)
        worst_bal = max(worst_bal, balancedness_residual(W))
        ref = singular_values(target)
        ref = ref[ref > 1e-10 * ref[0]] ** (1.0 / (len(dims) - 1))
        for w in W:
            s = singular_values(w)[: ref.size]
            worst_sv = max(worst_sv, float(np.max(np.abs(s - ref))))
        worst_prod = max(worst_prod, float(np.linalg.norm(collapsed_product(W) - target)
                                           / np.linalg.norm(target)))
    ok = worst_bal <= 1e-10 and worst_sv <= 1e-8 and worst_prod <= 1e-10
    return CheckResult("init.balanced_factorization", ok,
                       f"residual {_fmt(worst_bal)}, singular value spread {_fmt(worst_sv)}, "
                       f"product error {_fmt(worst_prod)}")


def check_theorem_init(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        prob = random_problem(rng, dims)
        W = theorem_init(dims, rng.uniform(0.5, 5))
        if np.any(W[0]):
            return CheckResult("init.theorem_init", False, "W_1 is not zero")
        worst = max(worst, abs(loss(W, prob) - float(np.sum(prob.Y ** 2)) / prob.m))
    return CheckResult("init.theorem_init", worst <= 1e-12, f"max loss diff {_fmt(worst)}")


def check_validity_monotone_in_a(seed: int, instances: int = 30) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        prob = random_problem(rng, dims)
        if numerical_rank(prob.restricted) == 0:
            continue
        flags = [validate_init(theorem_init(dims, a), prob).valid for a in np.geomspace(0.5, 1e4, 40)]
        first = flags.index(True) if True in flags else len(flags)
        bad += not all(flags[first:])
        a_min = min_admissible_a(prob)
        bad += not validate_init(theorem_init(dims, a_min), prob).valid
    return CheckResult("init.validity_monotone_in_a", bad == 0, f"{bad} violations")


# ------------------------------------------------------------- dynamics

def _certified_problems(rng, count, max_n=20):
    out = []
    while len(out) < count:
        dims = random_dims(rng, int(rng.integers(1, 4)), 6)
        prob = random_problem(rng, dims, n=int(rng.integers(4, max_n + 1)))
        if numerical_rank(prob.restricted) == 0:
            continue
        W0 = theorem_init(dims, min_admissible_a(prob))
        out.append((prob, W0, validate_init(W0, prob)))
    return out


def check_flow_envelope(seed: int, instances: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_env, worst_ball, mono = 0.0, 0.0, True
    for prob, W0, rep in _certified_problems(rng, instances):
        tr = flow_integrate(W0, prob, 10.0 / rep.alpha_lower, DynamicsOptions(max_steps=50_000))
        t, rel = tr.times, tr.rel_loss
        worst_env = max(worst_env, float(np.max(rel / np.exp(-rep.alpha_lower * t))))
        worst_ball = max(worst_ball, float(np.max(tr.column("dist_sq"))) / rep.r ** 2)
        mono &= bool(np.all(np.diff(tr.column("loss")) <= 0))
        # the same envelope in absolute terms, through the theory module
        curve = np.array([c for _, c in flow_bound_curve(rate_bundle(W0, prob), rep.loss0, rep.loss_min, t)])
        above = (tr.column("loss") - rep.loss_min) - curve * (1 + 1e-6)
        mono &= bool(np.all(above <= 1e-12 * rep.loss0))
    ok = worst_env <= 1 + 1e-6 and worst_ball <= 1 and mono
    return CheckResult("dynamics.flow_envelope", ok,
                       f"max rel/envelope {_fmt(worst_env)}, max dist/r^2 {_fmt(worst_ball)}, monotone and enveloped {mono}")


def check_descent_contraction(seed: int, instances: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, overrun, mono = -math.inf, 0, True
    for prob, W0, rep in _certified_problems(rng, instances):
        gap = rep.loss0 - rep.loss_min
        tr = gradient_descent(W0, prob, "auto", k_max=200_000, opts=DynamicsOptions(tol=1e-6))
        rho = np.array(tr.contraction)
        worst = max(worst, float(np.max(rho)) - (1 - tr.eta * rep.alpha_lower / 2))
        predicted = iterations_to_epsilon(rep, tr.eta, rep.loss0, rep.loss_min, 1e-6 * gap)
        hit = tr.time_to(1e-6)
        overrun += hit is None or hit > predicted
        mono &= tr.monotone
    ok = worst <= 1e-9 and overrun == 0 and mono
    return CheckResult("dynamics.descent_contraction", ok,
                       f"max rho - bound {_fmt(worst)}, iteration overruns {overrun}, monotone {mono}")


def check_balance_drift(seed: int, instances: int = 5) -> CheckResult:
    """Residual stays below its initial value plus the accumulated squared steps."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)), 6)
        prob = random_problem(rng, dims, n=int(rng.integers(4, 13)))
        if numerical_rank(prob.restricted) == 0:
            continue
        W0 = balanced_init(dims, 0.5 * min_norm_solution(prob), prob)
        tr = flow_integrate(W0, prob, 50.0, DynamicsOptions(tol=1e-8, max_steps=20_000))
        res, sq = tr.column("balance_residual"), tr.column("sum_step_sq")
        scale = max(float(np.sum(w * w)) for w in W0)
        worst = max(worst, float(np.max(res - res[0] - sq)) / max(scale, 1.0))
    return CheckResult("dynamics.balance_drift_budget", worst <= 1e-12, f"max excess {_fmt(worst)}")


# --------------------------------------------------------------- theory

def check_energy_lower_bound(seed: int, instances: int = 30) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(instances):
        H = int(rng.integers(1, 4))
        d_y = int(rng.integers(1, 4))
        dims = (int(rng.integers(1, 6)), *([int(rng.integers(max(d_y, 3), 7))] * H), d_y)
        prob = random_problem(rng, dims)
        Wt = min_norm_solution(prob)
        Emin = energy_min_value(prob)
        stacks = [balanced_init(dims, Wt)]
        for _ in range(5):
            # unbalanced factorization: rescale consecutive layers by c and 1/c
            ws = list(stacks[0].weights)
            l = int(rng.integers(0, H))
            c = rng.uniform(0.3, 3)
            ws[l], ws[l + 1] = c * ws[l], ws[l + 1] / c
            stacks.append(WeightStack(tuple(ws)))
        for W in stacks:
            worst = min(worst, W.energy() - Emin + 1e-9 * max(1.0, Emin))
    return CheckResult("theory.energy_lower_bound", worst >= 0, f"min slack {_fmt(worst)}")


def check_sigma_permutation(seed: int, instances: int = 30) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dims = random_dims(rng, int(rng.integers(1, 4)))
        prob = random_problem(rng, dims)
        W0 = theorem_init(dims, 2.0)
        perm = rng.permutation(prob.n_bar)
        other = Problem(prob.X, prob.S, prob.H, prob.Y[:, perm], np.array(prob.labeled)[perm])
        a = rate_bundle(W0, prob).sigma_small_restricted
        b = rate_bundle(W0, other).sigma_small_restricted
        worst = max(worst, abs(a - b) / max(1.0, a))
    return CheckResult("theory.sigma_permutation_invariant", worst <= 1e-12, f"max rel diff {_fmt(worst)}")


def sparsity_ordering(seed: int = ORDERING_SEED, ps=ORDERING_PS) -> list:
    """``[(p, sigma_small, time to rel_loss 1e-3)]`` for G(200, p) with the Laplacian shift.

    Features ``default_rng(seed + 1)``, labeled set of 150 nodes from
    ``default_rng(seed + 2)``, synthetic labels with ``eps = 0.1``.
    """
    from .experiments import gaussian_features, sample_labeled_set, synthetic_labels

    out = []
    X = gaussian_features(50, 200, seed + 1)
    I = sample_labeled_set(200, 150, seed + 2)
    for p in ps:
        g = erdos_renyi(200, p, seed)
        prob = Problem(X, build_shift(g, "lap"), 2, synthetic_labels(X, g, 0.1)[:, list(I)], I)
        W0 = theorem_init((50, 32, 32, 1), 2.0)
        tr = flow_integrate(W0, prob, 1e3, DynamicsOptions(tol=1e-4, max_steps=100_000))
        out.append((p, sigma_small(prob.restricted), tr.time_to(1e-3)))
    return out


def check_sparsity_ordering(seed: int = ORDERING_SEED) -> CheckResult:
    rows = sparsity_ordering(ORDERING_SEED)
    times = [t for _, _, t in rows]
    if any(t is None for t in times):
        return CheckResult("experiments.sparsity_ordering", False, "a run never reached rel_loss 1e-3")
    by_sigma = sorted(rows, key=lambda r: r[1])
    # smaller sigma_small must take longer
    ok = all(a[2] > b[2] for a, b in zip(by_sigma, by_sigma[1:]))
    detail = ", ".join(f"p={p}: sigma={_fmt(s)} t={_fmt(t)}" for p, s, t in rows)
    return CheckResult("experiments.sparsity_ordering", ok, f"seed {ORDERING_SEED}; {detail}")


SUITE: tuple[Callable[[int], CheckResult], ...] = (
    check_perturbation_lower_bound,
    check_product_lower_bound,
    check_row_space_bound,
    check_loss_above_minimum,
    check_forward_collapsed,
    check_reparameterization,
    check_least_squares_oracle,
    check_fd_gradients,
    check_directional_derivative,
    check_conservation_law,
    check_balanced_init,
    check_theorem_init,
    check_validity_monotone_in_a,
    check_flow_envelope,
    check_descent_contraction,
    check_balance_drift,
    check_energy_lower_bound,
    check_sigma_permutation,
    check_sparsity_ordering,
)


def run_suite(seed: int = 0, progress=None) -> list:
    results = []
    for check in SUITE:
        t0 = time.perf_counter()
        res = check(seed)
        res = CheckResult(res.name, res.ok, res.detail, time.perf_counter() - t0)
        results.append(res)
        if progress:
            progress(res)
    return results
