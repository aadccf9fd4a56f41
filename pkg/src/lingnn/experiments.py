"""Synthetic data, labeled-set sampling and the two sweep families.

Configs are plain JSON documents.  Recognised keys (all optional except
``graph``/``graphs``):

    graph / graphs   one spec or a list of specs, each
                     {"model": "er"|"knn"|"sbm"|"ba"|"csv", "params": {...}, "seed": int}
                     A list-valued param expands into one spec per value, e.g.
                     {"model": "er", "params": {"n": 200, "p": [0.03, 0.1, 0.3]}}.
                     "csv" takes {"path": ...}.
    shifts           list of shift kinds (default ["adj"])
    d_x, d_y         feature / label dimension (defaults 30 and 1)
    H                number of layers (default 2)
    hidden           hidden widths d_1..d_H (default d_x for every layer)
    features         "gaussian" (default) or a path to a feature CSV
    labels           "synthetic" (default), "exact", "zero" or a path to a label CSV
    eps              graph weight of the synthetic labels (default 0.1)
    label_fraction   labeled share of the nodes (default 0.75)
    n_bar            explicit list of labeled-set sizes (overrides label_fraction)
    init             {"scheme": "theorem"|"balanced", "a": number|"auto",
                      "target_scale": number}  (defaults theorem, "auto", 0.5)
    dynamics         {"method": "flow"|"normalized-flow"|"descent", "T_max": ...,
                      "k_max": ..., "tol": ..., "eta": number|"auto",
                      "max_step_norm": number|null}
    replications     labeled sets drawn per row (default 1)
    seed             master seed (default 0)
    trajectories     write one CSV per convergence row (default false)
    output           output directory used by the command line (default ".")

Seeding: the features use ``seed``; row ``r`` (rows are numbered in config
order) draws its labeled sets and any random labels from
``default_rng(seed + r)``.  A graph spec without its own seed uses ``seed``.
"""
from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    SAMPLE_FIELDS,
    DynamicsOptions,
    Trajectory,
    flow_integrate,
    gradient_descent,
    normalized_flow_integrate,
)
from .errors import ParameterError, ParseError, ShapeError
from .gnn import Problem, check_dims, min_norm_solution, propagate
from .graph import Graph, barabasi_albert, erdos_renyi, knn_ring, load_edge_csv, sbm
from .init import balanced_init, min_admissible_a, theorem_init, validate_init
from .linalg import sigma_small
from .shift import ShiftKind, build_shift
from .theory import expected_sigma_small

MODELS = {
    "er": (erdos_renyi, ("n", "p"), True),
    "knn": (knn_ring, ("n", "k"), False),
    "sbm": (sbm, ("n1", "n2", "p", "q"), True),
    "ba": (barabasi_albert, ("n", "m"), True),
    "csv": (load_edge_csv, ("path",), False),
}
METHODS = ("flow", "normalized-flow", "descent")
INIT_SCHEMES = ("theorem", "balanced")
LABEL_RULES = ("synthetic", "exact", "zero")
BOUND_SLACK = 1e-6


# ---------------------------------------------------------------- data

def gaussian_features(d_x: int, n: int, seed: int) -> np.ndarray:
    """``d_x x n`` matrix of i.i.d. standard normal entries."""
    return np.random.default_rng(seed).standard_normal((int(d_x), int(n)))


def synthetic_labels(X, g: Graph, eps: float = 0.1) -> np.ndarray:
    """``y_i = s_i + eps sum_{j ~ i} s_j`` with ``s`` the column sums of ``X``; shape ``1 x n``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != g.n:
        raise ShapeError(f"X has {X.shape[1]} columns, graph has {g.n} nodes")
    s = X.sum(axis=0)
    return (s + eps * (g.adjacency_matrix() @ s))[None, :]


def sample_labeled_set(n: int, n_bar: int, seed) -> tuple:
    """``n_bar`` distinct nodes drawn uniformly, sorted ascending.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    n, n_bar = int(n), int(n_bar)
    if not 1 <= n_bar <= n:
        raise ParameterError(f"n_bar must lie in [1, {n}], got {n_bar}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return tuple(int(i) for i in np.sort(rng.choice(n, size=n_bar, replace=False)))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _read_numeric_csv(path):
    """Rows of floats; a first line made only of non-numeric cells is a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not any(c.strip() for c in cells):
                continue
            if lineno == 1 and not any(_is_number(c) for c in cells):
                continue
            for col, cell in enumerate(cells, start=1):
                if not _is_number(cell):
                    raise ParseError(f"non-numeric cell {cell.strip()!r}", line=lineno, column=col)
            rows.append([float(c) for c in cells])
    return rows


def _matrix_from_csv(path, n):
    rows = _read_numeric_csv(path)
    if not rows:
        raise ParseError(f"{path} holds no data rows")
    for i, r in enumerate(rows):
        if len(r) != n:
            raise ShapeError(f"row {i + 1} of {path} has {len(r)} columns, expected {n} nodes")
    return np.array(rows, dtype=np.float64)


def load_features_csv(path, n: int) -> np.ndarray:
    """Feature matrix from a CSV with one row per feature and one column per node.

    Each row is z-scored with the population (1/n) variance; a constant row is
    set to zero with a warning.
    """
    X = _matrix_from_csv(path, int(n))
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    const = sd[:, 0] == 0
    if np.any(const):
        warnings.warn(f"constant feature rows {np.flatnonzero(const).tolist()} set to zero")
    sd[const] = 1.0
    out = (X - mu) / sd
    out[const] = 0.0
    return out


def load_labels_csv(path, n: int) -> np.ndarray:
    """Label matrix (``d_y x n``, one row per label dimension), used as is."""
    return _matrix_from_csv(path, int(n))


# -------------------------------------------------------------- config

@dataclass(frozen=True)
class GraphSpec:
    model: str
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ParameterError(f"unknown graph model {self.model!r}; choose from {sorted(MODELS)}")
        _, names, _ = MODELS[self.model]
        missing = [k for k in names if k not in self.params]
        extra = [k for k in self.params if k not in names]
        if missing or extra:
            raise ParameterError(f"model {self.model!r} takes params {list(names)}, got {sorted(self.params)}")

    def build(self, default_seed: int) -> Graph:
        fn, names, seeded = MODELS[self.model]
        args = [self.params[k] for k in names]
        if seeded:
            args.append(default_seed if self.seed is None else self.seed)
        return fn(*args)

    def label(self) -> str:
        return ";".join(f"{k}={self.params[k]}" for k in MODELS[self.model][1])


def expand_graph_specs(raw) -> tuple:
    """Expand list-valued params (cartesian product, in key order)."""
    if isinstance(raw, dict):
        raw = [raw]
    out = []
    for spec in raw:
        if not isinstance(spec, dict) or "model" not in spec:
            raise ParameterError(f"graph spec needs a 'model' key, got {spec!r}")
        params = dict(spec.get("params", {}))
        keys = list(params)
        grids = [v if isinstance(v, list) else [v] for v in params.values()]
        for combo in product(*grids):
            out.append(GraphSpec(spec["model"], dict(zip(keys, combo)), spec.get("seed")))
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    graphs: tuple
    shifts: tuple = ("adj",)
    d_x: int = 30
    d_y: int = 1
    H: int = 2
    hidden: Optional[tuple] = None
    features: str = "gaussian"
    labels: str = "synthetic"
    eps: float = 0.1
    label_fraction: float = 0.75
    n_bar: Optional[tuple] = None
    init: dict = field(default_factory=lambda: {"scheme": "theorem", "a": "auto"})
    dynamics: dict = field(default_factory=lambda: {"method": "flow"})
    replications: int = 1
    seed: int = 0
    trajectories: bool = False
    output: str = "."

    def __post_init__(self):
        if not self.graphs:
            raise ParameterError("at least one graph spec is required")
        for k in self.shifts:
            ShiftKind.parse(k)
        if int(self.replications) < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")
        if int(self.H) < 1 or int(self.d_x) < 1 or int(self.d_y) < 1:
            raise ParameterError("H, d_x and d_y must be positive")
        check_dims(self.dims)
        if self.n_bar is None and not 0 < self.label_fraction <= 1:
            raise ParameterError(f"label_fraction must lie in (0, 1], got {self.label_fraction}")
        scheme = self.init.get("scheme", "theorem")
        if scheme not in INIT_SCHEMES:
            raise ParameterError(f"init scheme must be one of {INIT_SCHEMES}, got {scheme!r}")
        a = self.init.get("a", "auto")
        if a != "auto" and not (isinstance(a, (int, float)) and a > 0):
            raise ParameterError(f"init a must be positive or 'auto', got {a!r}")
        method = self.dynamics.get("method", "flow")
        if method not in METHODS:
            raise ParameterError(f"dynamics method must be one of {METHODS}, got {method!r}")
        unknown = set(self.dynamics) - {"method", "T_max", "k_max", "tol", "eta", "max_step_norm"}
        if unknown:
            raise ParameterError(f"unknown dynamics keys {sorted(unknown)}")

    @property
    def dims(self) -> tuple:
        hidden = self.hidden if self.hidden is not None else (self.d_x,) * int(self.H)
        if len(hidden) != int(self.H):
            raise ParameterError(f"need {self.H} hidden widths, got {len(hidden)}")
        return (int(self.d_x), *(int(h) for h in hidden), int(self.d_y))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__} | {"graph"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        if "graph" in d and "graphs" in d:
            raise ParameterError("give either 'graph' or 'graphs', not both")
        raw = d.pop("graph", None) if "graph" in d else d.pop("graphs", None)
        if raw is None:
            raise ParameterError("config needs a 'graph' or 'graphs' entry")
        d["graphs"] = expand_graph_specs(raw)
        for key in ("shifts", "hidden", "n_bar"):
            if d.get(key) is not None:
                d[key] = tuple(d[key]) if isinstance(d[key], list) else (d[key],)
        if "init" in d:
            d["init"] = {"scheme": "theorem", "a": "auto", **d["init"]}
        if "dynamics" in d:
            d["dynamics"] = {"method": "flow", **d["dynamics"]}
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, line=e.lineno, column=e.colno) from None
        if not isinstance(data, dict):
            raise ParseError("config must be a JSON object")
        return cls.from_dict(data)

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def n_bar_for(self, n: int) -> tuple:
        if self.n_bar is not None:
            return tuple(int(v) for v in self.n_bar)
        return (max(1, int(round(self.label_fraction * n))),)


@dataclass
class SweepRow:
    """One output line: config coordinates plus measured values.

    ``wall_time`` is kept in memory but not written to CSV, so files are
    byte-identical across runs.
    """
    coords: dict
    values: dict
    error: str = ""
    wall_time: float = 0.0

    def record(self) -> dict:
        return {**self.coords, **self.values, "error": self.error}


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_rows_csv(rows: Sequence[SweepRow], path) -> None:
    header = []
    for r in rows:
        for k in r.record():
            if k not in header:
                header.append(k)
    # keep the error column last
    if "error" in header:
        header.remove("error")
        header.append("error")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            rec = r.record()
            w.writerow([format_value(rec.get(k)) for k in header])


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_FIELDS)
        for s in traj.samples:
            w.writerow([format_value(v) for v in s])


# -------------------------------------------------------------- sweeps

def _features(cfg: ExperimentConfig, n: int) -> np.ndarray:
    if cfg.features == "gaussian":
        return gaussian_features(cfg.d_x, n, cfg.seed)
    X = load_features_csv(cfg.features, n)
    if X.shape[0] != cfg.d_x:
        raise ShapeError(f"feature file has {X.shape[0]} rows but d_x = {cfg.d_x}")
    return X


def _labels(cfg, X, g, S, I, rng) -> np.ndarray:
    n = g.n
    if cfg.labels == "synthetic":
        if cfg.d_y != 1:
            raise ParameterError("synthetic labels have d_y = 1")
        return synthetic_labels(X, g, cfg.eps)[:, list(I)]
    if cfg.labels == "zero":
        return np.zeros((cfg.d_y, len(I)))
    if cfg.labels == "exact":
        # labels produced by a linear map of the propagated features: the
        # least-squares minimum is zero
        W = rng.standard_normal((cfg.d_y, cfg.d_x))
        return W @ propagate(X, S, cfg.H)[:, list(I)]
    Y = load_labels_csv(cfg.labels, n)
    if Y.shape[0] != cfg.d_y:
        raise ShapeError(f"label file has {Y.shape[0]} rows but d_y = {cfg.d_y}")
    return Y[:, list(I)]


def _units(cfg: ExperimentConfig):
    """Row coordinates in config order: graph spec, then shift, then ``n_bar``."""
    units = []
    for spec in cfg.graphs:
        g = spec.build(cfg.seed)
        for kind in cfg.shifts:
            for nb in cfg.n_bar_for(g.n):
                units.append((spec, ShiftKind.parse(kind).value, nb))
    return units


def _sigma_row(args) -> SweepRow:
    cfg, r, (spec, kind, nb) = args
    t0 = time.perf_counter()
    coords = dict(row=r, model=spec.model, graph=spec.label(), shift=kind, n_bar=nb,
                  d_x=cfg.d_x, H=cfg.H, replications=cfg.replications, seed=cfg.seed + r)
    try:
        g = spec.build(cfg.seed)
        S = build_shift(g, kind)
        X = _features(cfg, g.n)
        XS = propagate(X, S, cfg.H)
        rng = np.random.default_rng(cfg.seed + r)
        vals = np.array([sigma_small(XS[:, list(sample_labeled_set(g.n, nb, rng))])
                         for _ in range(cfg.replications)])
        pred = expected_sigma_small(X, S, cfg.H, nb)
        mean = float(vals.mean())
        values = dict(n=g.n, sigma_mean=mean, sigma_min=float(vals.min()), sigma_max=float(vals.max()),
                      sigma_full=sigma_small(XS), sigma_pred=pred,
                      rel_dev=abs(mean - pred) / pred if math.isfinite(pred) and pred > 0 else None)
        return SweepRow(coords, values, wall_time=time.perf_counter() - t0)
    except Exception as e:  # recorded per row, the sweep goes on
        return SweepRow(coords, {}, error=f"{type(e).__name__}: {e}", wall_time=time.perf_counter() - t0)


def build_problem(cfg: ExperimentConfig, spec: GraphSpec, kind, n_bar: int, row: int):
    """Graph, problem and row RNG for one sweep coordinate."""
    g = spec.build(cfg.seed)
    S = build_shift(g, kind)
    X = _features(cfg, g.n)
    rng = np.random.default_rng(cfg.seed + row)
    I = sample_labeled_set(g.n, n_bar, rng)
    Y = _labels(cfg, X, g, S, I, rng)
    return g, Problem(X, S, cfg.H, Y, I)


def initial_stack(cfg: ExperimentConfig, prob: Problem):
    scheme = cfg.init.get("scheme", "theorem")
    if scheme == "theorem":
        a = cfg.init.get("a", "auto")
        a = min_admissible_a(prob) if a == "auto" else float(a)
        return theorem_init(cfg.dims, a), a
    target = float(cfg.init.get("target_scale", 0.5)) * min_norm_solution(prob)
    return balanced_init(cfg.dims, target, prob), None


def run_dynamics(cfg: ExperimentConfig, W0, prob) -> Trajectory:
    dyn = cfg.dynamics
    method = dyn.get("method", "flow")
    opts = DynamicsOptions()
    if "tol" in dyn:
        opts = opts.with_(tol=float(dyn["tol"]))
    if dyn.get("max_step_norm") is not None:
        opts = opts.with_(max_step_norm=float(dyn["max_step_norm"]))
    if method == "descent":
        return gradient_descent(W0, prob, dyn.get("eta", "auto"), int(dyn.get("k_max", 10_000)), opts)
    T_max = float(dyn.get("T_max", 100.0))
    if "k_max" in dyn:
        opts = opts.with_(max_steps=int(dyn["k_max"]))
    fn = flow_integrate if method == "flow" else normalized_flow_integrate
    return fn(W0, prob, T_max, opts)


def bound_satisfied(traj: Trajectory, alpha: float) -> Optional[bool]:
    """Whether every sample lies under the exponential envelope (``None`` if no bound applies)."""
    if traj.method == "normalized-flow":
        return None
    if traj.method == "descent":
        q = 1.0 - traj.eta * alpha / 2.0
        if not 0.0 <= q < 1.0:
            return None
        env = lambda k: q ** k
    else:
        env = lambda t: math.exp(-alpha * t)
    return all(s.rel_loss <= env(s.t) * (1 + BOUND_SLACK) for s in traj.samples)


def _conv_row(args):
    cfg, r, (spec, kind, nb) = args
    t0 = time.perf_counter()
    coords = dict(row=r, model=spec.model, graph=spec.label(), shift=kind, n_bar=nb,
                  d_x=cfg.d_x, H=cfg.H, method=cfg.dynamics.get("method", "flow"), seed=cfg.seed + r)
    try:
        g, prob = build_problem(cfg, spec, kind, nb, r)
        W0, a = initial_stack(cfg, prob)
        rep = validate_init(W0, prob)
        traj = run_dynamics(cfg, W0, prob)
        values = dict(n=g.n, a=a, sigma_small=rep.sigma_small, beta=rep.beta, alpha_lower=rep.alpha_lower,
                      init_valid=rep.valid, loss0=rep.loss0, loss_min=rep.loss_min,
                      final_rel_loss=traj.final.rel_loss, final_t=traj.final.t,
                      time_to_1e_3=traj.time_to(1e-3), bound_ok=bound_satisfied(traj, rep.alpha_lower),
                      status=traj.status.value, steps=traj.steps, eta=traj.eta)
        return SweepRow(coords, values, wall_time=time.perf_counter() - t0), traj
    except Exception as e:
        return SweepRow(coords, {}, error=f"{type(e).__name__}: {e}", wall_time=time.perf_counter() - t0), None


def _run(fn, cfg, units, jobs, progress):
    tasks = [(cfg, r, u) for r, u in enumerate(units)]
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        out = []
        for t in tasks:
            out.append(fn(t))
            if progress:
                progress(len(out), len(tasks))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = []
        # map() yields in submission order whatever the completion order
        for res in pool.map(fn, tasks):
            out.append(res)
            if progress:
                progress(len(out), len(tasks))
        return out


def sigma_sweep(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> list:
    """Rows ``(graph, shift, n_bar)`` with mean/min/max ``sigma_small`` over replications."""
    return _run(_sigma_row, cfg, _units(cfg), jobs, progress)


def convergence_sweep(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> list:
    """``[(SweepRow, Trajectory or None)]``, one per ``(graph, shift, n_bar)``."""
    return _run(_conv_row, cfg, _units(cfg), jobs, progress)
