"""Graph shift (aggregation) operators."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .graph import Graph, adjacency_matrix


class ShiftKind(enum.Enum):
    ADJACENCY = "adj"
    SELF_LOOP_ADJACENCY = "sl-adj"
    NORMALIZED_SELF_LOOP_ADJACENCY = "nsl-adj"
    ROW_STOCHASTIC_SELF_LOOP = "row-sl"
    COL_STOCHASTIC_SELF_LOOP = "col-sl"
    LAPLACIAN = "lap"
    NORMALIZED_LAPLACIAN = "nlap"

    @classmethod
    def parse(cls, kind) -> "ShiftKind":
        if isinstance(kind, cls):
            return kind
        try:
            return cls(kind)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ParameterError(f"unknown shift kind {kind!r}; expected one of {names}") from None

    @property
    def symmetric(self) -> bool:
        return self not in (ShiftKind.ROW_STOCHASTIC_SELF_LOOP, ShiftKind.COL_STOCHASTIC_SELF_LOOP)


SHIFT_NAMES = tuple(k.value for k in ShiftKind)


@dataclass(frozen=True)
class ShiftMatrix:
    kind: ShiftKind
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _inv_sqrt(d):
    out = np.zeros_like(d)
    nz = d > 0
    out[nz] = 1.0 / np.sqrt(d[nz])
    return out


def build_shift(g: Graph, kind) -> ShiftMatrix:
    """Dense shift operator of the requested kind.

    ``D`` is the degree matrix of ``A`` and ``Dh`` that of ``I + A``.  The
    normalized Laplacian is ``D^{-1/2} (D - A) D^{-1/2}`` with ``D^{-1/2}`` set
    to zero at isolated nodes, so their rows and columns are zero.
    """
    kind = ShiftKind.parse(kind)
    A = adjacency_matrix(g)
    n = g.n
    if kind is ShiftKind.ADJACENCY:
        S = A
    elif kind is ShiftKind.LAPLACIAN:
        S = np.diag(A.sum(axis=1)) - A
    elif kind is ShiftKind.NORMALIZED_LAPLACIAN:
        d = A.sum(axis=1)
        r = _inv_sqrt(d)
        S = r[:, None] * (np.diag(d) - A) * r[None, :]
    else:
        At = A + np.eye(n)
        dh = At.sum(axis=1)
        if kind is ShiftKind.SELF_LOOP_ADJACENCY:
            S = At
        elif kind is ShiftKind.NORMALIZED_SELF_LOOP_ADJACENCY:
            r = 1.0 / np.sqrt(dh)
            S = r[:, None] * At * r[None, :]
        elif kind is ShiftKind.ROW_STOCHASTIC_SELF_LOOP:
            S = At / dh[:, None]
        else:
            S = At / dh[None, :]
    S = np.ascontiguousarray(S, dtype=np.float64)
    S.setflags(write=False)
    return ShiftMatrix(kind, S)
