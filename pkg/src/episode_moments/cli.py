"""``episode-moments`` command line tool.

Exit status: 0 success, 1 usage or parse error, 2 invalid model,
3 solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

from .chain import ModelError, check_chain
from .modelfile import (FIELDS, ModelFileError, fmt, heatmap_pgm, load_model, model_to_json,
                        read_solve_csv, solve_csv)
from .monte_carlo import DEFAULT_STEP_CAP, estimate
from .qdist import choose_horizon, q_distribution, truncated_moments
from .river import RiverConfig, build_river
from .solver import ConvergenceWarning, SolveConfig, solve_all, solve_success

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cell(text: str) -> tuple[int, int]:
    try:
        r, c = text.split(",")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROW,COL, got {text!r}") from None


def _port(text: str):
    return None if text.lower() == "none" else _cell(text)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(path: str):
    model = load_model(path)
    for diag in check_chain(model.chain):
        print(f"warning: {diag}", file=sys.stderr)
    return model


def _state_arg(model, state: int) -> int:
    if not 0 <= state < model.chain.num_states:
        raise UsageError(f"state {state} out of range 0..{model.chain.num_states - 1}")
    return state


def cmd_river(args) -> int:
    try:
        config = RiverConfig(width=args.width, height=args.height, port=args.port,
                             obstacles=frozenset(args.obstacle),
                             p_forward_each=args.p_forward, p_back=args.p_back,
                             t_diag=args.t_diag, t_forward=args.t_forward, t_back=args.t_back)
        chain, layout = build_river(config)
    except ModelError as exc:
        raise UsageError(str(exc)) from exc
    _emit(model_to_json(chain, layout), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load(args.model)
    config = SolveConfig(tolerance=args.tolerance, max_iterations=args.max_iterations,
                         iterations=args.iterations, in_place=args.gauss_seidel)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        result = solve_all(model.chain, config)
    _emit(solve_csv(result, model.layout), args.out)
    if not result.all_converged:
        stuck = [k for k, ok in result.converged.items() if not ok]
        print(f"error: phase(s) {', '.join(stuck)} did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_qdist(args) -> int:
    model = _load(args.model)
    x = _state_arg(model, args.state)
    t_max = args.tmax
    if t_max is None:
        t_max, _ = choose_horizon(model.chain, args.eps, states=[x])
    q = q_distribution(model.chain, t_max)
    mass, _, _ = truncated_moments(q, x)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        s = solve_success(model.chain).values[x]
    lines = ["T,q"] + [f"{t},{fmt(q.values[t, x])}" for t in range(t_max + 1)]
    lines.append(f"# mass {fmt(mass)} s {fmt(s)} defect {fmt(s - mass)}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load(args.model)
    x = _state_arg(model, args.state)
    if args.episodes < 1 or args.step_cap < 1:
        raise UsageError("--episodes and --step-cap must be positive")
    est = estimate(model.chain, x, args.episodes, seed=args.seed, step_cap=args.step_cap)
    sys.stdout.write(est.summary() + "\n")
    if args.csv:
        row = asdict(est)
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(row)
            w.writerow(v if isinstance(v, int) else fmt(v) for v in row.values())
    return EXIT_OK


def cmd_heatmap(args) -> int:
    try:
        text = Path(args.csv).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from exc
    try:
        pgm = heatmap_pgm(read_solve_csv(text), args.field)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    _emit(pgm, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="episode-moments",
                     description="Success probability and duration moments of episodic chains.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("river", help="generate the river-crossing model")
    p.add_argument("--width", type=int, default=50)
    p.add_argument("--height", type=int, default=10)
    p.add_argument("--port", type=_port, default=(0, 35), metavar="ROW,COL",
                   help="goal cell, or 'none' (default 0,35)")
    p.add_argument("--obstacle", type=_cell, action="append", default=[], metavar="ROW,COL")
    p.add_argument("--p-forward", type=float, default=0.3)
    p.add_argument("--p-back", type=float, default=0.1)
    p.add_argument("--t-diag", type=int, default=2)
    p.add_argument("--t-forward", type=int, default=1)
    p.add_argument("--t-back", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_river)

    p = sub.add_parser("solve", help="compute s, A, B, D for every state")
    p.add_argument("model")
    p.add_argument("--tolerance", type=float, default=1e-12)
    p.add_argument("--max-iterations", type=int, default=10_000)
    p.add_argument("--iterations", type=int, default=None,
                   help="run exactly N sweeps per phase instead of a residual test")
    p.add_argument("--gauss-seidel", action="store_true", help="in-place sweeps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("qdist", help="exact distribution of the successful completion time")
    p.add_argument("model")
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--tmax", type=int, default=None,
                   help="horizon (default: doubled until unabsorbed mass < --eps)")
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_qdist)

    p = sub.add_parser("simulate", help="Monte Carlo estimate from one start state")
    p.add_argument("model")
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-cap", type=int, default=DEFAULT_STEP_CAP)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("heatmap", help="render a solve CSV field as a PGM image")
    p.add_argument("csv")
    p.add_argument("--field", choices=FIELDS, default="s")
    p.add_argument("--out")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
