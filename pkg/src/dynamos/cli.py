"""Command-line experiment runner.

Every table goes to ``--out`` (or stdout) as CSV or JSON, headed by a metadata
block: config echo, master seed, version and wall-clock.  Data rows depend
only on the config, so re-running a config reproduces them byte for byte.

Exit codes: 0 ok, 1 no certificate (``certify`` only), 2 usage error,
3 invariant violation, 4 budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bd
from .coloring import run as run_coloring
from .graph_core import make_torus
from .montecarlo import (
    CSV_COLUMNS, GraphSpec, rows_to_json, sweep, threshold_levels,
)
from .random_regular import RetryCapExceeded
from .rng import substream
from .sc_simulator import SCInvariantError, run_sc
from .torus_analysis import certify_non_dynamo

EXIT_OK, EXIT_NO_CERT, EXIT_USAGE, EXIT_INVARIANT, EXIT_BUDGET = 0, 1, 2, 3, 4
SEED_ENV, WORKERS_ENV = "DYNAMOS_SEED", "DYNAMOS_WORKERS"

RECIPES = {
    "figure-bottom": {"n": [32, 64, 128, 256], "z": [0.05, 0.5, 0.95], "tol": 0.01, "budget": 1600,
                      "min_trials": 200},
}
THRESHOLD_COLUMNS = ["family", "n", "z", "trials", "p_z", "p_z_ln_n", "ci_low", "ci_high", "converged"]
CERT_COLUMNS = ["index", "n", "p", "seeds", "certified", "cages", "oracle_dynamo", "sound"]

log = logging.getLogger("dynamos")


class UsageError(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _split_list(values, kind):
    out = []
    for v in values or []:
        for part in str(v).split(","):
            part = part.strip()
            if not part:
                continue
            if kind is float and part.count(":") == 2:
                lo, hi, k = part.split(":")
                out += np.linspace(float(lo), float(hi), int(k)).tolist()
            else:
                try:
                    out.append(kind(part))
                except ValueError:
                    raise UsageError(f"cannot parse {part!r}") from None
    return out


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {raw!r}") from None


class Report:
    """Collects rows and writes them with the metadata header."""

    def __init__(self, args, command: str):
        self.command = command
        self.config = {k: v for k, v in sorted(vars(args).items())
                       if k not in ("func", "log_level")
                       and not k.endswith("_set") and not k.startswith("_")}
        self.started = getattr(args, "_started", time.time())
        self.extra: dict = {}

    def meta(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "master_seed": self.config.get("seed"),
            "version": __version__,
            "wall_clock": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "elapsed_s": round(time.time() - self.started, 3),
            **self.extra,
        }

    def render(self, columns, rows, fmt: str, trailer: dict | None = None) -> str:
        meta = self.meta()
        if fmt == "json":
            doc = {"meta": meta, "columns": columns,
                   "rows": [{c: _jsonable(r[c]) for c in columns} for r in rows]}
            if trailer:
                doc.update({k: _jsonable(v) for k, v in trailer.items()})
            return json.dumps(doc, indent=2, default=str) + "\n"
        buf = io.StringIO()
        for k, v in meta.items():
            buf.write(f"# {k}: {json.dumps(v, default=str, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
        for k, v in (trailer or {}).items():
            buf.write(f"# {k}: {_fmt(v)}\n")
        return buf.getvalue()

    def emit(self, args, columns, rows, trailer=None) -> None:
        text = self.render(columns, rows, args.format, trailer)
        if args.out and args.out != "-":
            path = Path(args.out)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        else:
            sys.stdout.write(text)


def _figure_path(args) -> Path | None:
    if not getattr(args, "plot", False):
        return None
    if not args.out or args.out == "-":
        raise UsageError("--plot needs --out; the figure is written next to it")
    return Path(args.out).with_suffix(".png")


def _p_values(args, n: int) -> list[float]:
    ps = list(args.p_grid)
    if getattr(args, "scaled", False):
        ps = [c / math.log(n) for c in ps]
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise UsageError(f"p={p} outside [0, 1]")
    return ps


def _sweep_rows(args, family: str) -> list:
    spec = GraphSpec(family, args.n[0], engine=args.engine, simple=getattr(args, "simple", False))
    rows = []
    for n in args.n:
        rows += sweep(spec, [n], _p_values(args, n), args.trials, args.seed, args.workers)
    return rows


def _threshold_rows(args, family: str) -> tuple[list, list]:
    points, rows = [], []
    for n in args.n:
        spec = GraphSpec(family, n, simple=getattr(args, "simple", False))
        pts = threshold_levels(spec, args.z, args.tol, args.budget, args.seed, args.workers,
                               min(args.min_trials, args.budget))
        points += pts
        for pt in pts:
            rows.append({"family": spec.label, "n": n, "z": pt.z, "trials": pt.trials_used,
                         "p_z": pt.p_z, "p_z_ln_n": pt.p_z * math.log(n),
                         "ci_low": pt.ci_low, "ci_high": pt.ci_high, "converged": pt.converged})
    return points, rows


def cmd_torus_sweep(args) -> int:
    if args.recipe:
        recipe = RECIPES[args.recipe]
        args.n = args.n or recipe["n"]
        args.z = args.z or recipe["z"]
        args.tol = args.tol if args.tol_set else recipe["tol"]
        args.budget = args.budget if args.budget_set else recipe["budget"]
        args.min_trials = args.min_trials if args.min_trials_set else recipe["min_trials"]
    if not args.n:
        raise UsageError("give --n or --recipe")
    fig = _figure_path(args)
    report = Report(args, "torus-sweep")
    if args.z:
        points, rows = _threshold_rows(args, "torus")
        report.emit(args, THRESHOLD_COLUMNS, rows)
        if fig:
            from .plotting import plot_threshold_curve
            plot_threshold_curve(points, fig)
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_BUDGET
    if not args.p_grid:
        raise UsageError("give --p-grid or --z")
    rows = _sweep_rows(args, "torus")
    report.emit(args, CSV_COLUMNS, rows_to_json(rows))
    if fig:
        from .plotting import plot_sweep
        plot_sweep(rows, fig)
    return EXIT_OK


def cmd_regular_sweep(args) -> int:
    if not args.n or not args.p_grid:
        raise UsageError("regular-sweep needs --n and --p-grid")
    if args.engine == "sc" and args.simple:
        raise UsageError("--simple applies to the eager engine only")
    fig = _figure_path(args)
    rows = _sweep_rows(args, "regular")
    report = Report(args, "regular-sweep")
    report.emit(args, CSV_COLUMNS, rows_to_json(rows))
    if fig:
        from .plotting import plot_sweep
        plot_sweep(rows, fig)
    return EXIT_OK


def cmd_threshold(args) -> int:
    if not args.n:
        raise UsageError("threshold needs --n")
    fig = _figure_path(args)
    points, rows = _threshold_rows(args, args.family)
    Report(args, "threshold").emit(args, THRESHOLD_COLUMNS, rows)
    if fig:
        from .plotting import plot_threshold_curve
        plot_threshold_curve(points, fig)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_BUDGET


def _bounds_rows(args) -> list[dict]:
    rows = []

    def add(quantity, parameter, value):
        rows.append({"quantity": quantity, "parameter": parameter, "value": value})

    wanted = {k for k in ("beta", "pi2", "v_products", "zaire", "tree", "sc_recurrence", "gw",
                          "contraction") if getattr(args, k) not in (None, False)}
    everything = not wanted
    if everything or "beta" in wanted:
        b = bd.beta_root()
        add("beta", "closed_form", b.closed_form)
        add("beta", "bisection", b.bisection)
        add("beta", "residual", b.residual)
    if everything or "pi2" in wanted:
        add("pi2_over_6", "value", bd.PI2_OVER_6)
    if everything or "v_products" in wanted:
        for q in args.v_products or [0.5]:
            v = bd.v_products(q)
            for name in ("v_odd", "v_even", "v_all", "terms", "tail_bound"):
                add("v_products", f"q={q!r}:{name}", getattr(v, name))
    if everything or "zaire" in wanted:
        for c in args.c or [1.60, 1.65]:
            for L in args.zaire_log_n or [math.log(1e6), math.log(1e12), 1e3, 1e4, 1e5, 1e6]:
                add("zaire", f"c={c!r}:ln_n={L!r}", bd.zaire_at_log(L, c))
            turn = bd.zaire_turning_point(c)
            add("zaire", f"c={c!r}:increasing_beyond_ln_n", float("inf") if turn is None else turn)
    if everything or "tree" in wanted:
        for p in args.tree or [0.10, 0.12]:
            for slack_name, slack in (("exact", 1.0), ("slack", bd.ROUNDING_SLACK)):
                t = bd.tree_recursion(p, args.steps, slack)
                add("tree", f"p={p!r}:{slack_name}:escape_step",
                    -1 if t.escape_step is None else t.escape_step)
                add("tree", f"p={p!r}:{slack_name}:sup", t.sup)
    if everything or "sc_recurrence" in wanted:
        for p in args.sc_recurrence or [0.10]:
            tr = bd.sc_recurrence(p, args.steps)
            k = tr.steps
            add("sc_recurrence", f"p={p!r}:b_{k}", tr.b[k])
            add("sc_recurrence", f"p={p!r}:m_{k}", tr.m[k])
            add("sc_recurrence", f"p={p!r}:r_{k}", tr.r[k])
            add("sc_recurrence", f"p={p!r}:cumulative_black", tr.cumulative_black[k])
    if everything or "gw" in wanted:
        N, lam, sigma2 = args.gw or [1000.0, 0.9, 0.9]
        mom = bd.gw_moments(bd.BranchingParams(N, lam, sigma2), args.t)
        for name in ("E_Xt", "E_Xsum", "var_bound", "tail_prob_bound", "var_exact",
                     "tail_prob_bound_exact"):
            val = getattr(mom, name)
            add("gw", name, float("nan") if val is None else val)
    if everything or "contraction" in wanted:
        rep = bd.epsilon_contraction_check(args.eps or [0.01, 0.1, 0.2, 3 / 7, 0.5, 0.9])
        for r in rep.rows:
            add("contraction", f"eps={r.eps!r}:exact", r.exact)
            add("contraction", f"eps={r.eps!r}:cubic_bound_holds", r.cubic_holds)
            add("contraction", f"eps={r.eps!r}:quadratic_bound_holds", r.quadratic_holds)
        add("contraction", "cubic_bound_fails_below", rep.cubic_failure_below)
    return rows


def cmd_bounds(args) -> int:
    rows = _bounds_rows(args)
    Report(args, "bounds").emit(args, ["quantity", "parameter", "value"], rows)
    return EXIT_OK


def cmd_certify(args) -> int:
    n = args.n[0] if args.n else None
    if n is None or n % 2 or n < 8:
        raise UsageError("certify needs one even --n >= 8")
    ps = args.p_grid or ([args.p] if args.p is not None else None)
    if not ps:
        raise UsageError("certify needs --p or --p-grid")
    t = make_torus(n)
    cert_dir = Path(args.cert_dir) if args.cert_dir else None
    rows, index = [], 0
    for p in ps:
        for _ in range(args.trials):
            mask = substream(args.seed, index, "seeds").random(t.vertex_count) < p
            cover = certify_non_dynamo(t, mask, args.stripe_width)
            oracle = run_coloring(t, mask, record_times=False).is_dynamo
            sound = cover is None or not oracle
            rows.append({"index": index, "n": n, "p": p, "seeds": int(mask.sum()),
                         "certified": cover is not None,
                         "cages": 0 if cover is None else len(cover.cages),
                         "oracle_dynamo": oracle, "sound": sound})
            if cover is not None and cert_dir is not None:
                cert_dir.mkdir(parents=True, exist_ok=True)
                doc = {"version": __version__, "master_seed": args.seed, "index": index,
                       "n": n, "p": p, "seeds": np.flatnonzero(mask).tolist(),
                       "cover": cover.to_dict()}
                (cert_dir / f"cert_{index:06d}.json").write_text(json.dumps(doc) + "\n")
            index += 1
    violations = sum(not r["sound"] for r in rows)
    certified = sum(r["certified"] for r in rows)
    Report(args, "certify").emit(args, CERT_COLUMNS, rows,
                                 {"certified": certified, "violations": violations})
    if violations:
        log.error("%d certificate(s) contradicted by the simulator", violations)
        return EXIT_INVARIANT
    return EXIT_OK if certified == len(rows) else EXIT_NO_CERT


def cmd_sc_trace(args) -> int:
    if not args.n or args.p is None:
        raise UsageError("sc-trace needs --n and --p")
    fig = _figure_path(args)
    res = run_sc(args.n[0], args.p, substream(args.seed, 0, "graph"), audit=args.audit)
    f = res.fractions()
    rows = [{"step": i, "b": f["b"][i], "m": f["m"][i], "r": f["r"][i]} for i in range(res.b.size)]
    Report(args, "sc-trace").emit(args, ["step", "b", "m", "r"], rows,
                                  {"verdict": "dynamo" if res.is_dynamo else "not-dynamo",
                                   "black_fraction": res.black_fraction})
    if fig:
        from .plotting import plot_sc_trace
        plot_sc_trace(res, bd.sc_recurrence(args.p, max(res.steps, 1), 1.0, 1.0), fig)
    return EXIT_OK


def cmd_gw_sim(args) -> int:
    off = bd.Offspring.parse(args.offspring, args.lam)
    bp = bd.BranchingParams(args.N, args.lam, off.variance)
    sample = bd.gw_simulate(bp, off, args.trials, args.seed, args.max_generations)
    mom = bd.gw_moments(bp, 0, require_sum=True)
    rows = [
        {"quantity": "mean_x_sum", "value": sample.mean},
        {"quantity": "expected_x_sum", "value": mom.E_Xsum},
        {"quantity": "relative_error", "value": abs(sample.mean - mom.E_Xsum) / mom.E_Xsum},
        {"quantity": "tail_frequency", "value": sample.tail_frequency},
        {"quantity": "chebyshev_bound", "value": mom.tail_prob_bound},
        {"quantity": "chebyshev_bound_exact_variance", "value": mom.tail_prob_bound_exact},
        {"quantity": "empirical_variance", "value": float(sample.x_sum.var(ddof=1))},
        {"quantity": "variance_bound", "value": mom.var_bound},
        {"quantity": "variance_exact", "value": mom.var_exact},
        {"quantity": "truncated_runs", "value": sample.truncated},
    ]
    Report(args, "gw-sim").emit(args, ["quantity", "value"], rows)
    return EXIT_BUDGET if sample.truncated else EXIT_OK


def _common(p: argparse.ArgumentParser, *, plot: bool = False) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"master seed (env {SEED_ENV}, default 0)")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (env {WORKERS_ENV}, default 1)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    if plot:
        p.add_argument("--plot", action="store_true",
                       help="also render a PNG figure next to --out")


def _grids(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", nargs="+", default=[], help="sizes, space or comma separated")
    p.add_argument("--p-grid", nargs="+", default=[],
                   help="seed probabilities; 'lo:hi:k' expands to k evenly spaced values")
    p.add_argument("--trials", type=int, default=100)


def _threshold_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--z", nargs="+", default=[], help="probability levels in (0, 1)")
    p.add_argument("--tol", type=float, default=None, help="target CI width for p_z (default 0.01)")
    p.add_argument("--budget", type=int, default=None, help="max trials per size (default 1600)")
    p.add_argument("--min-trials", type=int, default=None,
                   help="trials before the first convergence check (default 64)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynamos", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("torus-sweep", help="dynamo probability or p_z levels on n x n tori")
    _grids(p)
    _threshold_opts(p)
    p.add_argument("--scaled", action="store_true", help="read --p-grid as c with p = c / ln n")
    p.add_argument("--recipe", choices=sorted(RECIPES))
    p.add_argument("--engine", choices=("eager",), default="eager")
    _common(p, plot=True)
    p.set_defaults(func=cmd_torus_sweep)

    p = sub.add_parser("regular-sweep", help="dynamo probability on random 4-regular graphs")
    _grids(p)
    p.add_argument("--engine", choices=("eager", "sc"), default="eager")
    p.add_argument("--simple", action="store_true", help="reject multigraphs (eager engine)")
    _common(p, plot=True)
    p.set_defaults(func=cmd_regular_sweep)

    p = sub.add_parser("threshold", help="p_z for given levels and sizes")
    p.add_argument("--family", choices=("torus", "regular", "single"), default="torus")
    p.add_argument("--n", nargs="+", default=[])
    _threshold_opts(p)
    p.add_argument("--simple", action="store_true")
    _common(p, plot=True)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("bounds", help="evaluate the analytic quantities")
    p.add_argument("--beta", action="store_true")
    p.add_argument("--pi2", action="store_true")
    p.add_argument("--v-products", nargs="+", type=float, metavar="Q")
    p.add_argument("--zaire", action="store_true")
    p.add_argument("--c", nargs="+", type=float, help="constants for --zaire (p = c / ln n)")
    p.add_argument("--zaire-log-n", nargs="+", type=float, metavar="LN_N",
                   help="values of ln n for --zaire")
    p.add_argument("--tree", nargs="+", type=float, metavar="P")
    p.add_argument("--sc-recurrence", nargs="+", type=float, metavar="P")
    p.add_argument("--steps", type=int, default=60, help="steps for --tree and --sc-recurrence")
    p.add_argument("--gw", nargs=3, type=float, metavar=("N", "LAMBDA", "SIGMA2"))
    p.add_argument("--t", type=int, default=10, help="generation for E(X_t)")
    p.add_argument("--contraction", action="store_true")
    p.add_argument("--eps", nargs="+", type=float)
    _common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("certify", help="cage-cover certificates on sampled tori")
    p.add_argument("--n", nargs="+", default=[])
    p.add_argument("--p", type=float)
    p.add_argument("--p-grid", nargs="+", default=[])
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--stripe-width", type=int)
    p.add_argument("--cert-dir", help="directory for certificate JSON files")
    _common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sc-trace", help="per-step SC fractions for one run")
    p.add_argument("--n", nargs="+", default=[])
    p.add_argument("--p", type=float)
    p.add_argument("--audit", action="store_true", help="check SC invariants every round")
    _common(p, plot=True)
    p.set_defaults(func=cmd_sc_trace)

    p = sub.add_parser("gw-sim", help="Galton-Watson total progeny")
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--lam", type=float, default=0.9)
    p.add_argument("--offspring", default="poisson", help="poisson, binomial:K or constant")
    p.add_argument("--trials", type=int, default=10_000, help="independent runs")
    p.add_argument("--max-generations", type=int, default=100_000)
    _common(p)
    p.set_defaults(func=cmd_gw_sim)
    return ap


def _normalize(args) -> None:
    if args.seed is None:
        args.seed = _env_int(SEED_ENV, 0)
    if args.workers is None:
        args.workers = _env_int(WORKERS_ENV, 1)
    if args.workers < 1:
        raise UsageError("workers must be >= 1")
    if hasattr(args, "n") and isinstance(args.n, list):
        args.n = _split_list(args.n, int)
    if hasattr(args, "p_grid"):
        args.p_grid = _split_list(args.p_grid, float)
    if hasattr(args, "z"):
        args.z = _split_list(args.z, float)
        if any(not 0.0 < z < 1.0 for z in args.z):
            raise UsageError("levels must lie in (0, 1)")
    if hasattr(args, "tol"):
        args.tol_set, args.budget_set = args.tol is not None, args.budget is not None
        args.tol = 0.01 if args.tol is None else args.tol
        args.budget = 1600 if args.budget is None else args.budget
        args.min_trials_set = args.min_trials is not None
        args.min_trials = 64 if args.min_trials is None else args.min_trials
        if args.min_trials < 1 or args.budget < 1:
            raise UsageError("--min-trials and --budget must be >= 1")
    if getattr(args, "trials", 1) < 1:
        raise UsageError("trials must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    args._started = time.time()
    try:
        _normalize(args)
        return args.func(args)
    except (SCInvariantError, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (RetryCapExceeded, BudgetExhausted) as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
