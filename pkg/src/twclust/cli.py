"""Command-line front end.

Subcommands: ``select-k``, ``cluster``, ``simulate``, ``reproduce-table`` and
``calibrate-m``. Full results go to the ``--output`` file; stdout only gets a
short summary. Every output file embeds the resolved configuration.

Exit codes: 0 success, 2 usage/parameter error, 3 data error, 4 computation
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import DISTANCES, TW, ClusterOptions, cluster
from .data import dump_dataset, load_dataset
from .errors import DataError, ParameterError, SelectionError
from .measure import DEFAULT_M, MeasureConfig, permutation_levels
from .selection import DEFAULT_B, METHODS, SelectionInputs, evaluate
from .simulation import DEFAULT_R, generate_scenario, get_scenario, monte_carlo

log = logging.getLogger("twclust")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COMPUTE = 0, 2, 3, 4
SEED_ENV = "TWCLUST_SEED"


def _alpha_grid(text):
    """``0:1:0.1`` (start:stop:step) or a comma list ``0,0.5,1``."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            count = int(round((stop - start) / step)) + 1
            return tuple(round(start + i * step, 10) for i in range(count))
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha grid {text!r}") from None


def _int_list(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _methods(text):
    items = tuple(m.strip().lower() for m in text.split(",") if m.strip())
    bad = [m for m in items if m not in METHODS]
    if bad or not items:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(bad) or text!r}; choose from {', '.join(METHODS)}")
    return items


def _default_seed():
    value = os.environ.get(SEED_ENV)
    try:
        return int(value) if value is not None else 0
    except ValueError:
        return 0


def _add_common(p, *, search=True):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help=f"master seed (default 0, or ${SEED_ENV})")
    p.add_argument("--output", "-o", type=Path, help="output file")
    p.add_argument("--m", type=int, default=DEFAULT_M, help="window size (odd)")
    p.add_argument("--distance", choices=DISTANCES, default=TW)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=100)
    if search:
        p.add_argument("--kmin", type=int, default=1)
        p.add_argument("--kmax", type=int, default=8)
        p.add_argument("--alphas", type=_alpha_grid, default=_alpha_grid("0:1:0.1"),
                       help="alpha grid, start:stop:step or comma list (default 0:1:0.1)")
        p.add_argument("--B", type=int, default=DEFAULT_B, help="gap reference datasets")


def _add_input(p):
    p.add_argument("--input", "-i", type=Path, required=True, help="CSV of curves, one per row")
    p.add_argument("--header", action="store_true", help="first row holds grid times")
    p.add_argument("--labels", action="store_true", help="last column holds integer labels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twclust", description="Number-of-clusters selection for functional data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-k", help="select the number of clusters of a CSV dataset")
    _add_input(p)
    p.add_argument("--method", type=_methods, default=("ch",),
                   help=f"comma list of {', '.join(METHODS)}")
    _add_common(p)

    p = sub.add_parser("cluster", help="cluster a CSV dataset for one k")
    _add_input(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    _add_common(p, search=False)

    p = sub.add_parser("simulate", help="write one simulated scenario dataset as CSV")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--r", type=int, default=DEFAULT_R, help="grid size")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--output", "-o", type=Path)

    p = sub.add_parser("reproduce-table", help="Monte Carlo frequency table for a scenario")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--r", type=int, default=DEFAULT_R, help="grid size")
    p.add_argument("--methods", type=_methods, default=METHODS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_common(p)

    p = sub.add_parser("calibrate-m", help="choose the window size by permutation")
    _add_input(p)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--candidates", type=_int_list, default=(3, 5, 7, 9))
    p.add_argument("--permutations", type=int, default=20)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--output", "-o", type=Path)
    return parser


def _options(args, alpha=0.5) -> ClusterOptions:
    return ClusterOptions(max_iterations=args.max_iter, restarts=args.restarts, seed=args.seed,
                          distance=args.distance, measure=MeasureConfig(alpha=alpha, m=args.m))


def _config(args) -> dict:
    out = {"version": __version__}
    for key, value in sorted(vars(args).items()):
        if key in ("output", "verbose"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _read(args):
    try:
        data = args.input.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc.strerror}") from None
    return load_dataset(data, header=args.header, labels=args.labels)


def cmd_select_k(args) -> int:
    dataset = _read(args)
    if args.kmin < 1 or args.kmax < args.kmin:
        raise ParameterError(f"invalid k-range {args.kmin}..{args.kmax}")
    ks = range(args.kmin, args.kmax + 1)
    inputs = SelectionInputs(dataset, ks, args.alphas, _options(args))
    traces = [evaluate(inputs, m, B=args.B, gap_seed=args.seed) for m in args.method]
    result = {"config": _config(args), "n": dataset.n, "r": dataset.r,
              "results": [t.to_dict() for t in traces]}
    _write(args.output or Path("select_k.json"), _dump_json(result))
    for t in traces:
        alpha = "" if t.alpha_opt is None else f" alpha_opt={t.alpha_opt:g}"
        print(f"{t.method}: K_opt={t.k_opt}{alpha}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    dataset = _read(args)
    c = cluster(dataset, args.k, _options(args, alpha=args.alpha))
    result = {
        "config": _config(args),
        "k": c.k,
        "assignments": (c.assignments + 1).tolist(),
        "sizes": c.sizes.tolist(),
        "centers": c.centers.tolist(),
        "overall_center": c.overall_center.tolist(),
        "converged": c.converged,
        "iterations": c.iterations,
        "objective": c.objective,
    }
    _write(args.output or Path("clusters.json"), _dump_json(result))
    print(f"k={c.k} sizes={c.sizes.tolist()} converged={c.converged} objective={c.objective:.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = get_scenario(args.scenario, r=args.r)
    dataset = generate_scenario(spec, args.seed)
    out = args.output or Path(f"scenario{args.scenario}.csv")
    _write(out, dump_dataset(dataset, header=True, labels=True))
    print(f"scenario {spec.id}: n={dataset.n} r={dataset.r} sizes={list(spec.cluster_sizes)} "
          f"seed={args.seed} -> {out}")
    return EXIT_OK


def cmd_reproduce_table(args) -> int:
    spec = get_scenario(args.scenario, r=args.r)
    ks = range(args.kmin, args.kmax + 1)
    table = monte_carlo(spec, args.methods, args.distance, args.runs, ks, args.alphas, args.seed,
                        _options(args), B=args.B, workers=args.workers)
    table.config.update({"cli": _config(args)})
    out = args.output or Path(f"table_s{args.scenario}_{args.distance}.{args.format}")
    if args.format == "csv":
        header = "# " + json.dumps(table.config, sort_keys=True) + "\n"
        _write(out, header + table.to_csv())
    else:
        _write(out, table.to_json())
    print(table.to_csv(), end="")
    return EXIT_OK


def cmd_calibrate_m(args) -> int:
    dataset = _read(args)
    levels = permutation_levels(dataset, args.level, args.candidates, args.permutations, args.seed)
    chosen = min(levels, key=lambda m: (abs(levels[m] - args.level), m))
    result = {"config": _config(args), "m": chosen,
              "empirical_levels": {str(m): v for m, v in levels.items()}}
    if args.output:
        _write(args.output, _dump_json(result))
    for m, v in levels.items():
        print(f"m={m}: empirical level {v:.4f}")
    print(f"chosen m={chosen}")
    return EXIT_OK


COMMANDS = {
    "select-k": cmd_select_k,
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
    "reproduce-table": cmd_reproduce_table,
    "calibrate-m": cmd_calibrate_m,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SelectionError as exc:
        print(f"selection failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
