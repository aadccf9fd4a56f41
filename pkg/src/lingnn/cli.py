"""Command-line front end.

    lingnn gen-graph   --model er --n 200 --p 0.1 --seed 1 --out graph.csv
    lingnn sigma-sweep --config sweep.json --out results/
    lingnn sweep       --config sweep.json --out results/ --jobs 4
    lingnn train       --config run.json --out run/
    lingnn predict     --config run.json
    lingnn verify      [--seed 0]

Flags override config keys.  Progress goes to standard error, machine-readable
summaries (one JSON document) to standard output.  Exit codes: 0 success,
1 runtime failure (a JSON error line on standard error), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import auto_stepsize, iterations_to_epsilon
from .errors import ParameterError
from .experiments import (
    MODELS,
    ExperimentConfig,
    GraphSpec,
    bound_satisfied,
    build_problem,
    convergence_sweep,
    initial_stack,
    run_dynamics,
    sigma_sweep,
    write_rows_csv,
    write_trajectory_csv,
)
from .graph import write_edge_csv
from .init import min_admissible_a, validate_init
from .linalg import numerical_rank, sigma_small
from .shift import SHIFT_NAMES
from .theory import energy_min_value, rate_bundle
from .verify import run_suite

log = logging.getLogger("lingnn")

GRAPH_FLAGS = ("n", "p", "k", "m", "n1", "n2", "q")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output directory (file path for gen-graph)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps (1 = serial)")
    common.add_argument("--shift", choices=SHIFT_NAMES, help="use this single shift kind")
    common.add_argument("--model", choices=sorted(k for k in MODELS if k != "csv"),
                        help="replace the config graphs by one model built from the graph flags")
    for name in ("n", "k", "m", "n1", "n2"):
        common.add_argument(f"--{name}", type=int)
    for name in ("p", "q"):
        common.add_argument(f"--{name}", type=float)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="lingnn", description="Linear GNN training dynamics experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-graph", parents=[common], help="write an edge CSV for a graph model")
    sub.add_parser("sigma-sweep", parents=[common], help="sigma_small over labeled-set sizes")
    sub.add_parser("sweep", parents=[common], help="convergence sweep over graphs and shifts")
    sub.add_parser("train", parents=[common], help="one training run: trajectory CSV and init report")
    p = sub.add_parser("predict", parents=[common], help="rate constants and iteration counts")
    p.add_argument("--eps-rel", type=float, default=1e-6,
                   help="target gap as a fraction of the initial gap (default 1e-6)")
    sub.add_parser("verify", parents=[common], help="run the invariant suites")
    return parser


def _graph_spec_from_flags(args) -> GraphSpec:
    names = MODELS[args.model][1]
    params = {}
    for k in names:
        v = getattr(args, k)
        if v is None:
            raise UsageError(f"--model {args.model} needs --{' --'.join(names)}")
        params[k] = v
    return GraphSpec(args.model, params, args.seed)


def load_config(args, need_config: bool = True) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    elif args.model:
        cfg = ExperimentConfig(graphs=(_graph_spec_from_flags(args),))
    elif need_config:
        raise UsageError("give --config or --model with graph parameters")
    else:
        return None
    if args.model and args.config:
        cfg = cfg.with_(graphs=(_graph_spec_from_flags(args),))
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if args.shift:
        cfg = cfg.with_(shifts=(args.shift,))
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out if args.out else (cfg.output if cfg else "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _progress(label):
    def report(done, total):
        log.info("%s: %d/%d rows", label, done, total)
    return report


def cmd_gen_graph(args) -> int:
    if args.model:
        spec = _graph_spec_from_flags(args)
        seed = 0 if args.seed is None else args.seed
    else:
        cfg = load_config(args)
        spec, seed = cfg.graphs[0], cfg.seed
    g = spec.build(seed)
    out = Path(args.out or "graph.csv")
    if out.is_dir():
        out = out / "graph.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_edge_csv(g, out)
    _emit({"path": str(out), "n": g.n, "edges": g.num_edges, "model": spec.model, "params": spec.params})
    return 0


def cmd_sigma_sweep(args) -> int:
    cfg = load_config(args)
    rows = sigma_sweep(cfg, jobs=args.jobs, progress=_progress("sigma-sweep"))
    path = _out_dir(args, cfg) / "sigma_sweep.csv"
    write_rows_csv(rows, path)
    _emit({"path": str(path), "rows": len(rows), "errors": sum(bool(r.error) for r in rows)})
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args, cfg)
    results = convergence_sweep(cfg, jobs=args.jobs, progress=_progress("sweep"))
    rows = [r for r, _ in results]
    write_rows_csv(rows, out / "convergence_sweep.csv")
    if cfg.trajectories:
        for row, traj in results:
            if traj is not None:
                write_trajectory_csv(traj, out / f"trajectory_{row.coords['row']:03d}.csv")
    bad_bounds = sum(r.values.get("init_valid") is True and r.values.get("bound_ok") is False for r in rows)
    _emit({"path": str(out / "convergence_sweep.csv"), "rows": len(rows),
           "errors": sum(bool(r.error) for r in rows), "bound_violations": bad_bounds})
    return 0


def _first_problem(cfg):
    spec = cfg.graphs[0]
    g = spec.build(cfg.seed)
    return build_problem(cfg, spec, cfg.shifts[0], cfg.n_bar_for(g.n)[0], 0)


def cmd_train(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args, cfg)
    _, prob = _first_problem(cfg)
    W0, a = initial_stack(cfg, prob)
    rep = validate_init(W0, prob)
    log.info("init valid=%s alpha=%.6g", rep.valid, rep.alpha_lower)
    traj = run_dynamics(cfg, W0, prob)
    write_trajectory_csv(traj, out / "trajectory.csv")
    _write_json({**rep.to_dict(), "a": a}, out / "init_report.json")
    _emit({"trajectory": str(out / "trajectory.csv"), "init_report": str(out / "init_report.json"),
           "init_valid": rep.valid, "final_rel_loss": traj.final.rel_loss, "final_t": traj.final.t,
           "status": traj.status.value, "steps": traj.steps,
           "bound_ok": bound_satisfied(traj, rep.alpha_lower)})
    return 0


def cmd_predict(args) -> int:
    cfg = load_config(args)
    _, prob = _first_problem(cfg)
    W0, a = initial_stack(cfg, prob)
    rep = validate_init(W0, prob)
    bundle = rate_bundle(W0, prob)
    gap = rep.loss0 - rep.loss_min
    eta = cfg.dynamics.get("eta", "auto")
    eta = auto_stepsize(W0, prob) if eta == "auto" else float(eta)
    try:
        a_min = min_admissible_a(prob)
    except ValueError as e:
        a_min, a_note = None, str(e)
    else:
        a_note = ""
    if gap <= 0:
        iters, iters_note = 0, "already at the minimum"
    else:
        try:
            iters, iters_note = iterations_to_epsilon(rep, eta, rep.loss0, rep.loss_min, args.eps_rel * gap), ""
        except ParameterError as e:
            iters, iters_note = None, str(e)
    _emit({"rate_bundle": bundle.to_dict(), "min_admissible_a": a_min, "min_admissible_a_note": a_note,
           "a": a, "init_valid": rep.valid, "energy_min_value": energy_min_value(prob),
           "eta": eta, "eps": args.eps_rel * gap, "iterations_to_epsilon": iters,
           "iterations_note": iters_note, "loss0": rep.loss0, "loss_min": rep.loss_min,
           "sigma_small_full": sigma_small(prob.propagated) if numerical_rank(prob.propagated) else 0.0})
    return 0


def cmd_verify(args) -> int:
    seed = 0 if args.seed is None else args.seed

    def report(res):
        log.warning("%s %s: %s (%.1fs)", "ok  " if res.ok else "FAIL", res.name, res.detail, res.seconds)

    results = run_suite(seed, progress=report)
    failed = [r.name for r in results if not r.ok]
    _emit({"seed": seed, "checks": [r.to_dict() for r in results], "failed": failed})
    return 1 if failed else 0


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "sigma-sweep": cmd_sigma_sweep,
    "sweep": cmd_sweep,
    "train": cmd_train,
    "predict": cmd_predict,
    "verify": cmd_verify,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except SystemExit as e:        # --help / --version
        return int(e.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 2
    except Exception as e:
        err = {"error": type(e).__name__, "message": str(e), "command": args.command}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
