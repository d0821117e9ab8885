"""Command-line entry point.

Exit status: 0 on success, 1 on a usage error, 2 when the command fails
at run time. Every randomized subcommand needs an explicit ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .discrepancy import full_coloring, gamma_coloring, write_coloring
from .dp_apsd import MODES, AlgoConfig, apsd_approx, apsd_input_only, apsd_pure, apsd_with_oracle
from .graph import read_graph, write_graph, write_matrix
from .hardness import (
    BRUTE_FORCE_MAX_N,
    brute_force_disc,
    grid_ppls,
    incidence_matrix,
    linear_query_error,
    metrize,
    path_system_from_ppls,
    read_ppls,
    reduce_to_apsd,
    write_ppls,
)
from .mechanisms import PrivacyBudget, make_rng


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _mode(text: str) -> str:
    mode = text.replace("-", "_")
    if mode not in MODES:
        raise argparse.ArgumentTypeError(f"mode must be one of {', '.join(MODES)}")
    return mode


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("sizes must be comma-separated integers") from exc
    if len(sizes) < 1 or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def _add_algo(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", type=_mode, required=True, help=f"one of {', '.join(MODES)}")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--k", type=int, default=None, help="oracle levels (oracle modes)")
    p.add_argument("--s", type=int, default=None, help="override the hub-set size")
    p.add_argument("--t", type=int, default=None, help="override the hop bound")
    p.add_argument("--noise-off", action="store_true", help="disable all noise (testing)")
    p.add_argument("--clamp-nonnegative", action="store_true")


def _config(args) -> AlgoConfig:
    try:
        return AlgoConfig(
            args.mode,
            PrivacyBudget(args.epsilon, args.delta),
            k=args.k,
            s=args.s,
            t=args.t,
            noise_off=args.noise_off,
            clamp_nonnegative=args.clamp_nonnegative,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _cache_dir(args):
    if args.no_cache:
        return None
    return args.cache_dir or harness.default_cache_dir()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpapsd", description="Private all-pairs shortest-path distances and lower-bound tools.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="generate a graph file")
    p.add_argument("--kind", required=True, choices=["path", "cycle", "grid", "erdos_renyi", "complete"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--weights", required=True, help="const:c or uniform:a,b")
    p.add_argument("--p", type=float, default=None, help="edge probability (erdos_renyi)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run private APSD trials on a graph file")
    p.add_argument("--graph", required=True)
    _add_algo(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--matrix-out", default=None, help="dump the first trial's estimate")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtimes")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--no-cache", action="store_true")

    p = sub.add_parser("scaling", help="error vs n over generated graphs, as CSV")
    p.add_argument("--kind", required=True, choices=["path", "cycle", "grid", "erdos_renyi", "complete"])
    p.add_argument("--sizes", type=_sizes, required=True)
    p.add_argument("--weights", default="const:1")
    p.add_argument("--p", type=float, default=None)
    _add_algo(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--no-cache", action="store_true")

    p = sub.add_parser("hard-gen", help="grid point-line system and its APSD reduction")
    p.add_argument("--m", type=int, required=True, help="grid side length")
    p.add_argument("--seed", type=int, required=True, help="draws the private 0/1 vector z")
    p.add_argument("--out-ppls", required=True)
    p.add_argument("--out-graph", default=None)
    p.add_argument("--out-paths", default=None, help="sidecar JSON path table")
    p.add_argument("--out-z", default=None)

    p = sub.add_parser("hard-eval", help="linear-query error of a private APSD run on the reduction")
    p.add_argument("--ppls", required=True)
    _add_algo(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("disc", help="constructive coloring of a point-line system")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ppls")
    src.add_argument("--grid", type=int, help="use the m x m grid")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--constant", type=float, default=1.0, help="threshold constant C")
    p.add_argument("--unsquared", action="store_true", help="use the exp(-c/16) feasibility test")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="coloring vector")

    p = sub.add_parser("disc-brute", help="exact discrepancy for small systems")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ppls")
    src.add_argument("--grid", type=int)
    p.add_argument("--gamma", type=float, default=1.0)
    return parser


def _cmd_gen(args) -> None:
    harness.write_generated_graph(args.kind, args.n, args.weights, args.seed, args.out, p=args.p)


def _cmd_run(args) -> None:
    config = _config(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    g = read_graph(args.graph)
    truth = harness.exact_truth(g, args.graph, _cache_dir(args))
    res, first = harness.run_trials(
        g, config, args.trials, args.seed, truth=truth, timing=args.timing, keep_first=args.matrix_out is not None
    )
    doc = res.to_json()
    if args.matrix_out:
        write_matrix(first, args.matrix_out)
        doc["matrix_path"] = args.matrix_out
    harness.dump_json(doc, args.out)
    print(json.dumps(doc["aggregate"]))


def _cmd_scaling(args) -> None:
    config = _config(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    results, slope = harness.scaling_run(
        args.kind, args.sizes, args.weights, config, args.trials, args.seed, p=args.p,
        cache_dir=_cache_dir(args), timing=args.timing,
    )
    text = harness.scaling_csv(results, slope)
    with open(args.out, "w", newline="") as fh:
        fh.write(text)
    sys.stdout.write(text)


def _reduction(ppls, z):
    met = metrize(ppls)
    return reduce_to_apsd(path_system_from_ppls(ppls), met, z)


def _cmd_hard_gen(args) -> None:
    if args.m < 2:
        raise UsageError("--m must be >= 2")
    ppls = grid_ppls(args.m)
    write_ppls(ppls, args.out_ppls)
    z = make_rng(args.seed).integers(0, 2, ppls.N)
    if args.out_graph or args.out_paths:
        inst = _reduction(ppls, z)
        if args.out_graph:
            write_graph(inst.graph, args.out_graph)
        if args.out_paths:
            inst.write_sidecar(args.out_paths)
    if args.out_z:
        with open(args.out_z, "w") as fh:
            fh.write("\n".join(str(int(v)) for v in z) + "\n")


def _algorithm(config: AlgoConfig):
    b = config.effective_budget
    kw = dict(s=config.s, t=config.t, clamp_nonnegative=config.clamp_nonnegative)
    if config.mode == "pure":
        return lambda g, rng: apsd_pure(g, b.epsilon, rng, **kw)
    if config.mode == "approx":
        return lambda g, rng: apsd_approx(g, b.epsilon, b.delta, rng, **kw)
    if config.mode.startswith("oracle"):
        delta = b.delta if config.mode == "oracle_approx" else 0.0
        return lambda g, rng: apsd_with_oracle(g, config.k, b.epsilon, rng, delta, **kw)
    return lambda g, rng: apsd_input_only(g, b.epsilon, rng, t=config.t)


def _cmd_hard_eval(args) -> None:
    config = _config(args)
    ppls = read_ppls(args.ppls)
    base = _reduction(ppls, np.zeros(ppls.N, dtype=np.int64))
    algo = _algorithm(config)
    errors = []
    for i in range(args.trials):
        rng = make_rng(args.seed + i)
        z = rng.integers(0, 2, ppls.N)
        errors.append(linear_query_error(algo, base, rng, z))
    doc = {
        "mode": config.mode,
        "N": ppls.N,
        "D": ppls.D,
        "n": base.graph.n,
        "epsilon": config.budget.epsilon,
        "delta": config.budget.delta,
        "k": config.k,
        "noise_off": config.noise_off,
        "base_seed": args.seed,
        "errors": errors,
        "err_median": float(np.median(errors)),
        "err_max": float(np.max(errors)),
    }
    harness.dump_json(doc, args.out)
    print(json.dumps({"err_median": doc["err_median"], "err_max": doc["err_max"]}))


def _load_ppls(args):
    return grid_ppls(args.grid) if args.grid is not None else read_ppls(args.ppls)


def _cmd_disc(args) -> None:
    if not 0 < args.gamma <= 1:
        raise UsageError("--gamma must lie in (0, 1]")
    ppls = _load_ppls(args)
    rng = make_rng(args.seed)
    if args.gamma == 1.0:
        res = full_coloring(ppls, rng, args.constant, unsquared=args.unsquared)
    else:
        res = gamma_coloring(ppls, args.gamma, args.constant, rng, unsquared=args.unsquared)
    write_coloring(res.x, args.out)
    print(json.dumps({"N": ppls.N, "D": ppls.D, "gamma": args.gamma, "value": res.value, "rounds": len(res.rounds)}))


def _cmd_disc_brute(args) -> None:
    if not 0 < args.gamma <= 1:
        raise UsageError("--gamma must lie in (0, 1]")
    ppls = _load_ppls(args)
    if ppls.N > BRUTE_FORCE_MAX_N:
        raise UsageError(f"exact search handles at most {BRUTE_FORCE_MAX_N} points; use the disc subcommand")
    value = brute_force_disc(incidence_matrix(ppls), args.gamma)
    print(json.dumps({"N": ppls.N, "D": ppls.D, "gamma": args.gamma, "disc": value}))


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "scaling": _cmd_scaling,
    "hard-gen": _cmd_hard_gen,
    "hard-eval": _cmd_hard_eval,
    "disc": _cmd_disc,
    "disc-brute": _cmd_disc_brute,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dpapsd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, KeyError, IndexError) as exc:
        print(f"dpapsd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
