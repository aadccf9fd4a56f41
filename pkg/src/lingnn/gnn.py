"""The linear GNN, its semi-supervised square loss and the exact minimum.

A network with ``H`` layers maps features ``X`` (``d_x x n``) to

    f(X) = W_{H+1} X_H,    X_l = W_l X_{l-1} S,    X_0 = X,

so only the collapsed product ``W_{H+1} ... W_1`` and ``X S^H`` matter.  The
loss is evaluated on the labeled columns ``I`` only:

    L(W) = ||f(X)[:, I] - Y||_F^2 / m,    m = |I| * d_y.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .linalg import pseudoinverse, row_space_projector
from .shift import ShiftMatrix


class BottleneckWarning(UserWarning):
    """A hidden width is below ``min(d_x, d_y)``: the least-squares value is only a lower bound."""


def check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    """Validate a schedule ``(d_x, d_1, ..., d_H, d_y)`` with ``d_1 >= ... >= d_y``."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 3:
        raise ParameterError(f"need at least one hidden layer, got dims {dims}")
    if any(d < 1 for d in dims):
        raise ParameterError(f"all widths must be positive, got {dims}")
    tail = dims[1:]
    if any(a < b for a, b in zip(tail[:-1], tail[1:])):
        raise ParameterError(f"widths d_1 >= d_2 >= ... >= d_y required, got {dims}")
    return dims


def has_bottleneck(dims: Sequence[int]) -> bool:
    dims = tuple(dims)
    floor = min(dims[0], dims[-1])
    return any(d < floor for d in dims[1:-1])


@dataclass(frozen=True)
class WeightStack:
    """Weights ``W_1 ... W_{H+1}``; ``W_l`` has shape ``(d_l, d_{l-1})``."""

    weights: tuple

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        if len(ws) < 2:
            raise ParameterError("a linear GNN needs H >= 1, i.e. at least two weight matrices")
        for i, w in enumerate(ws):
            if w.ndim != 2:
                raise ShapeError(f"W_{i + 1} must be a matrix, got shape {w.shape}")
        for i in range(1, len(ws)):
            if ws[i].shape[1] != ws[i - 1].shape[0]:
                raise ShapeError(
                    f"W_{i + 1} has {ws[i].shape[1]} columns but W_{i} has {ws[i - 1].shape[0]} rows")
        for w in ws:
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        check_dims(self.dims)

    @property
    def H(self) -> int:
        return len(self.weights) - 1

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    def energy(self) -> float:
        """Total energy ``sum_l ||W_l||_F^2``."""
        return float(sum(np.sum(w * w) for w in self.weights))

    def distance_sq(self, other: "WeightStack") -> float:
        return float(sum(np.sum((a - b) ** 2) for a, b in zip(self.weights, other.weights)))


def _shift_array(S):
    return S.matrix if isinstance(S, ShiftMatrix) else np.asarray(S, dtype=np.float64)


def propagate(X, S, H: int) -> np.ndarray:
    """``X S^H`` by repeated right multiplication."""
    out = np.asarray(X, dtype=np.float64)
    S = _shift_array(S)
    for _ in range(H):
        out = out @ S
    return out


@dataclass(frozen=True, eq=False)
class Problem:
    """Semi-supervised node regression instance ``(X, S, H, Y, I)``.

    Column ``j`` of ``Y`` is the label of node ``labeled[j]``.
    """

    X: np.ndarray
    S: object
    H: int
    Y: np.ndarray
    labeled: tuple

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.atleast_2d(np.asarray(self.Y, dtype=np.float64))
        S = _shift_array(self.S)
        if X.ndim != 2:
            raise ShapeError(f"X must be d_x x n, got shape {X.shape}")
        n = X.shape[1]
        if S.shape != (n, n):
            raise ShapeError(f"S must be {n} x {n}, got {S.shape}")
        if int(self.H) < 1:
            raise ParameterError(f"H must be at least 1, got {self.H}")
        idx = tuple(int(i) for i in self.labeled)
        if not idx:
            raise ParameterError("the labeled set is empty")
        if len(set(idx)) != len(idx):
            raise ParameterError("labeled indices must be unique")
        if min(idx) < 0 or max(idx) >= n:
            raise ParameterError(f"labeled indices must lie in [0, {n})")
        if Y.shape[1] != len(idx):
            raise ShapeError(f"Y has {Y.shape[1]} columns but {len(idx)} labeled nodes")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "labeled", idx)

    @property
    def shift(self) -> np.ndarray:
        return _shift_array(self.S)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def n_bar(self) -> int:
        return len(self.labeled)

    @property
    def d_x(self) -> int:
        return self.X.shape[0]

    @property
    def d_y(self) -> int:
        return self.Y.shape[0]

    @property
    def m(self) -> int:
        return self.n_bar * self.d_y

    @cached_property
    def propagated(self) -> np.ndarray:
        """``X S^H`` (``d_x x n``)."""
        return propagate(self.X, self.S, self.H)

    @cached_property
    def restricted(self) -> np.ndarray:
        """``(X S^H)[:, I]`` (``d_x x n_bar``)."""
        return np.ascontiguousarray(self.propagated[:, list(self.labeled)])

    def with_labels(self, Y) -> "Problem":
        return Problem(self.X, self.S, self.H, Y, self.labeled)

    def check_stack(self, W: WeightStack) -> None:
        if W.H != self.H:
            raise ShapeError(f"stack has H={W.H}, problem has H={self.H}")
        if W.dims[0] != self.d_x or W.dims[-1] != self.d_y:
            raise ShapeError(
                f"stack maps {W.dims[0]} -> {W.dims[-1]} features, problem needs {self.d_x} -> {self.d_y}")


def collapsed_product(W) -> np.ndarray:
    """``W_{H+1} W_H ... W_1``."""
    ws = getattr(W, "weights", W)
    return reduce(lambda acc, w: w @ acc, ws[1:], ws[0])


def forward(W: WeightStack, prob: Problem) -> np.ndarray:
    """Layer-by-layer output ``d_y x n``; the last layer is not followed by a shift."""
    prob.check_stack(W)
    S = prob.shift
    Z = prob.X
    for w in W.weights[:-1]:
        Z = w @ Z @ S
    return W.weights[-1] @ Z


def loss(W: WeightStack, prob: Problem) -> float:
    prob.check_stack(W)
    R = collapsed_product(W) @ prob.restricted - prob.Y
    return float(np.sum(R * R)) / prob.m


def global_min_loss(prob: Problem, dims: Sequence[int] | None = None) -> float:
    """``||Y (I - M^+ M)||_F^2 / m`` with ``M = (X S^H)[:, I]``.

    This is the infimum over all ``d_y x d_x`` matrices.  When ``dims`` is given
    and some hidden width is below ``min(d_x, d_y)``, the rank constraint may be
    active and the value is only a lower bound; a :class:`BottleneckWarning`
    is issued in that case.
    """
    if dims is not None and has_bottleneck(dims):
        warnings.warn(f"hidden widths {tuple(dims)[1:-1]} form a bottleneck; "
                      "the returned value is a lower bound", BottleneckWarning, stacklevel=2)
    P = row_space_projector(prob.restricted)
    R = prob.Y - prob.Y @ P
    return float(np.sum(R * R)) / prob.m


def min_norm_solution(prob: Problem) -> np.ndarray:
    """Minimum-Frobenius-norm least-squares solution ``Y M^+``."""
    return prob.Y @ pseudoinverse(prob.restricted)
