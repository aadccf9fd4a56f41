"""Undirected simple graphs and the random models used in the experiments.

All randomness comes from ``numpy.random.default_rng(seed)``, i.e. the PCG64
bit generator seeded through ``SeedSequence``.  A generator called twice with
the same parameters and seed returns an identical graph.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParameterError, ParseError


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``edges`` is stored as a sorted tuple of pairs ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise ParameterError(f"node count must be positive, got {self.n}")
        canon = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ParameterError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ParameterError(f"edge ({u}, {v}) has endpoint outside [0, {self.n})")
            pair = (u, v) if u < v else (v, u)
            if pair in canon:
                raise ParameterError(f"duplicate edge {pair}")
            canon.add(pair)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, **meta) -> "Graph":
        return cls(n, tuple((int(u), int(v)) for u, v in edges), dict(meta))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency_matrix(self) -> np.ndarray:
        return adjacency_matrix(self)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


def adjacency_matrix(g: Graph) -> np.ndarray:
    """Dense symmetric 0/1 adjacency matrix with zero diagonal."""
    A = np.zeros((g.n, g.n))
    if g.edges:
        e = np.asarray(g.edges)
        A[e[:, 0], e[:, 1]] = 1.0
        A[e[:, 1], e[:, 0]] = 1.0
    return A


def _check_prob(name, p):
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1], got {p}")


def _check_n(n):
    if int(n) != n or n < 1:
        raise ParameterError(f"node count must be a positive integer, got {n}")


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """G(n, p): every one of the C(n, 2) pairs is an edge independently with prob. ``p``."""
    _check_n(n)
    _check_prob("p", p)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph.from_edges(n, zip(iu[keep], ju[keep]), model="er", p=p, seed=seed)


def knn_ring(n: int, k: int) -> Graph:
    """Nodes equally spaced on a circle, each joined to its ``k`` nearest neighbours.

    Node ``i`` is adjacent to ``i +- 1, ..., i +- k/2 (mod n)``.  ``k`` must be even.
    """
    _check_n(n)
    if int(k) != k or k <= 0 or k % 2:
        raise ParameterError(f"k must be a positive even integer, got {k}")
    if k >= n:
        raise ParameterError(f"k must be smaller than n, got k={k}, n={n}")
    edges = set()
    for i in range(n):
        for s in range(1, k // 2 + 1):
            j = (i + s) % n
            edges.add((min(i, j), max(i, j)))
    return Graph.from_edges(n, edges, model="knn", k=k)


def sbm(n1: int, n2: int, p: float, q: float, seed: int) -> Graph:
    """Two-block stochastic block model.

    Nodes ``0..n1-1`` form the first block and ``n1..n1+n2-1`` the second.  Pairs
    inside a block are joined with probability ``p``, pairs across with ``q``.
    """
    _check_n(n1)
    _check_n(n2)
    _check_prob("p", p)
    _check_prob("q", q)
    n = n1 + n2
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    same = (iu < n1) == (ju < n1)
    prob = np.where(same, p, q)
    keep = rng.random(iu.size) < prob
    return Graph.from_edges(n, zip(iu[keep], ju[keep]), model="sbm", n1=n1, n2=n2, p=p, q=q, seed=seed)


def barabasi_albert(n: int, m: int, seed: int) -> Graph:
    """Preferential attachment starting from the complete graph on ``m`` nodes.

    Every later node brings ``m`` edges to distinct existing nodes drawn with
    probability proportional to their current degree (uniformly while all
    degrees are zero, which only happens for ``m = 1``).  The edge count is
    ``m(m-1)/2 + (n-m)m``.
    """
    _check_n(n)
    if int(m) != m or m < 1 or m >= n:
        raise ParameterError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    deg = np.zeros(n)
    edges = []
    for i in range(m):
        for j in range(i + 1, m):
            edges.append((i, j))
    deg[:m] = m - 1
    for v in range(m, n):
        w = deg[:v]
        total = w.sum()
        probs = w / total if total > 0 else None
        targets = rng.choice(v, size=m, replace=False, p=probs)
        for u in targets:
            edges.append((int(u), v))
        deg[targets] += 1
        deg[v] = m
    return Graph.from_edges(n, edges, model="ba", m=m, seed=seed)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def load_edge_csv(path) -> Graph:
    """Read an edge list with one ``u,v`` pair per line.

    Node ids are remapped to ``0..n-1`` in order of first appearance.  A first
    line that is not numeric is treated as a header.  Self-loops and repeated
    edges are dropped; their counts are stored in ``meta`` and reported through
    :mod:`warnings`.
    """
    path = Path(path)
    ids: dict[int, int] = {}
    edges = set()
    dup = loops = 0
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            if lineno == 1 and not all(_is_int(c) for c in cells):
                continue
            if len(cells) != 2 or not all(_is_int(c) for c in cells):
                raise ParseError(f"expected 'u,v' with integer ids, got {','.join(row)!r}", line=lineno)
            u, v = (ids.setdefault(int(c), len(ids)) for c in cells)
            if u == v:
                loops += 1
                continue
            pair = (min(u, v), max(u, v))
            if pair in edges:
                dup += 1
                continue
            edges.add(pair)
    if not ids:
        raise ParseError("no edges found", line=None)
    if dup or loops:
        warnings.warn(f"{path.name}: dropped {dup} duplicate edge(s) and {loops} self-loop(s)")
    return Graph.from_edges(len(ids), edges, model="csv", path=str(path),
                            dropped_duplicates=dup, dropped_self_loops=loops)


def write_edge_csv(g: Graph, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("u,v\n")
        for u, v in g.edges:
            fh.write(f"{u},{v}\n")
