"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 computation or input error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .data import fixture_ids, load_fixture, tiny_mazes
from .engine import construal_distribution, obstacle_marginals, vor_table
from .maze import DEFAULT_DISCOUNT, DEFAULT_SLIP, GridMaze, maze_from_json, parse_maze, true_mdp
from .mdp import optimal_stochastic_policy, value_iteration
from .modification import DEFAULT_GRID, NoiseParams, fit_noise_params, modification_scores
from .render import render_heatmap

log = logging.getLogger("construal")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- input helpers -------------------------------------------------------------

def load_maze(ref: str, slip: float) -> tuple[str, GridMaze]:
    """A maze from a ``.maze``/``.json`` path or a bundled fixture name."""
    path = Path(ref)
    if path.exists():
        text = path.read_text("utf-8")
        maze = maze_from_json(text) if path.suffix == ".json" else parse_maze(text)
        mid = path.stem
    elif ref in tiny_mazes():
        mid, maze = ref, tiny_mazes()[ref]
    elif ref in fixture_ids():
        mid, maze = ref, load_fixture(ref)
    else:
        raise FileNotFoundError(f"no maze file or fixture named {ref!r}")
    return mid, dataclasses.replace(maze, slip=slip)


def load_mazes(refs: Sequence[str], slip: float) -> dict[str, GridMaze]:
    refs = list(refs) or fixture_ids()
    out = {}
    for ref in refs:
        mid, maze = load_maze(ref, slip)
        if mid in out:
            raise ValueError(f"maze id {mid!r} given twice")
        out[mid] = maze
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}")


def emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _csv(header: Sequence[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else repr(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# -- subcommands -----------------------------------------------------------------

def cmd_solve(args) -> None:
    mid, maze = load_maze(args.maze, args.slip)
    mdp = true_mdp(maze, args.gamma)
    v, q = value_iteration(mdp)
    pi = optimal_stochastic_policy(q)
    if args.format == "json":
        emit(args, _json({
            "maze_id": mid, "gamma": args.gamma, "start_value": float(v[maze.start_index]),
            "values": [float(x) for x in v], "policy": [[float(p) for p in row] for row in pi],
        }))
    else:
        rows = []
        for s in range(maze.n_states):
            x, y = maze.cell(s)
            rows.append([str(s), str(x), str(y), float(v[s])] + [float(p) for p in pi[s]])
        emit(args, _csv(["state", "x", "y", "value", "up", "down", "left", "right"], rows))


def cmd_vgc(args) -> None:
    mid, maze = load_maze(args.maze, args.slip)
    table = vor_table(maze, args.max_size, args.gamma)
    dist = construal_distribution(table, args.alpha)
    marg = obstacle_marginals(dist, maze.n_obstacles)
    entries = [{"construal_bits": c.bits, "utility": e.behavioral_utility, "cost": e.cost,
                "vor": e.vor, "prob": dist[c]} for c, e in table.items()]
    if args.format == "json":
        emit(args, _json({"maze_id": mid, "alpha": args.alpha, "vor": entries,
                          "marginals": [float(m) for m in marg]}))
    else:
        emit(args, _csv(["obstacle_id", "marginal"], [[str(i), float(m)] for i, m in enumerate(marg)]))


def _params(args) -> Optional[NoiseParams]:
    if args.params is None:
        return None
    vals = _floats(args.params)
    if len(vals) != 4:
        raise UsageError("--params needs four values: inv_temp_action,eps_action,"
                         "inv_temp_construal,eps_construal")
    return NoiseParams(*vals)


def cmd_vgc_mod(args) -> None:
    mid, maze = load_maze(args.maze, args.slip)
    params = _params(args)
    scores = modification_scores(maze, params, args.max_size, args.mode, args.rollouts,
                                 args.seed, args.max_steps, args.gamma)
    if params is None:
        # fixed model: optimal stochastic plans instead of an action softmax
        shown = {"inv_temp_action": None, "eps_action": 0.0, "inv_temp_construal": 10.0,
                 "eps_construal": 0.0}
    else:
        shown = dataclasses.asdict(params)
    if args.format == "json":
        emit(args, _json({"maze_id": mid, "params": shown, "scores": [float(s) for s in scores],
                          "mode": args.mode}))
    else:
        emit(args, _csv(["obstacle_id", "score"], [[str(i), float(s)] for i, s in enumerate(scores)]))


def _trajectories(path: Optional[str]) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text("utf-8"))
    return {k: [tuple(c) for c in v] for k, v in data.items()}


def cmd_predictors(args) -> None:
    mazes = load_mazes(args.mazes, args.slip)
    config = analysis.PredictorConfig(
        seed=args.seed, n_sims=args.n_sims, alpha=args.alpha, meta_mode=args.mode,
        n_rollouts=args.rollouts, n_opt_samples=args.opt_samples, discount=args.gamma,
        spectral=args.spectral, trajectories=_trajectories(args.trajectories))
    table = analysis.predictor_table(mazes, config)
    if args.zscore:
        table = analysis.zscore_table(table)
    if args.format == "json":
        emit(args, _json(table.rows))
    else:
        emit(args, table.to_csv())


def _read_responses(path: str) -> analysis.ResponseTable:
    return analysis.ResponseTable.from_csv(Path(path).read_text("utf-8"))


def cmd_fit(args) -> None:
    mazes = load_mazes(args.mazes, args.slip)
    responses = _read_responses(args.responses)
    measures = responses.measures()
    measure = args.measure
    if measure is None:
        if len(measures) != 1:
            raise UsageError(f"responses hold several measures {measures}; pick one with --measure")
        measure = measures[0]
    grid = json.loads(args.grid) if args.grid else DEFAULT_GRID
    result = fit_noise_params(mazes, responses.for_measure(measure), grid, args.max_size,
                              args.rollouts, args.seed, args.max_steps, args.gamma, args.jobs)
    out = {"measure": measure, "params": dataclasses.asdict(result.params),
           "r_squared": result.r_squared}
    if args.format == "json":
        emit(args, _json(out))
    else:
        p = result.params
        emit(args, _csv(["measure", "inv_temp_action", "eps_action", "inv_temp_construal",
                         "eps_construal", "r_squared"],
                        [[measure, p.inv_temp_action, p.eps_action, p.inv_temp_construal,
                          p.eps_construal, result.r_squared]]))


def cmd_analyze(args) -> None:
    table = analysis.PredictorTable.from_csv(Path(args.table).read_text("utf-8"))
    records = analysis.analyze(table, _read_responses(args.responses),
                               standardize=not args.raw)
    if args.format == "json":
        emit(args, _json(records))
    else:
        cols = ["predictor", "measure", "n", "slope", "intercept", "r_squared", "error"]
        rows = [[r[c] if isinstance(r.get(c), str) else ("" if c not in r else repr(r[c]))
                 for c in cols] for r in records]
        emit(args, "\n".join([",".join(cols)] + [",".join(r) for r in rows]) + "\n")


def cmd_render(args) -> None:
    mid, maze = load_maze(args.maze, args.slip)
    if args.scores is not None:
        scores = _floats(args.scores)
    else:
        table = vor_table(maze, args.max_size, args.gamma)
        scores = obstacle_marginals(construal_distribution(table, args.alpha), maze.n_obstacles)
    emit(args, render_heatmap(maze, list(scores), args.normalization, title=mid))


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--gamma", type=float, default=DEFAULT_DISCOUNT)
    common.add_argument("--alpha", type=float, default=0.1)
    common.add_argument("--slip", type=float, default=DEFAULT_SLIP)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="default: csv for predictors, json otherwise")
    common.add_argument("--config", help="JSON file of option defaults; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    meta = _Parser(add_help=False)
    meta.add_argument("--mode", choices=("exact", "rollouts"), default="exact")
    meta.add_argument("--rollouts", type=int, default=1000)
    meta.add_argument("--max-steps", type=int, default=1000)
    meta.add_argument("--max-size", type=int, default=None,
                      help="largest construal considered (default: all; 3 for fit)")

    parser = _Parser(prog="construal", description="Value-guided construal models for grid mazes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="optimal values and policy of a maze")
    p.add_argument("maze")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("vgc", parents=[common], help="construal table and obstacle marginals")
    p.add_argument("maze")
    p.add_argument("--max-size", type=int, default=None)
    p.set_defaults(func=cmd_vgc)

    p = sub.add_parser("vgc-mod", parents=[common, meta], help="construal-modification scores")
    p.add_argument("maze")
    p.add_argument("--params", help="inv_temp_action,eps_action,inv_temp_construal,eps_construal")
    p.set_defaults(func=cmd_vgc_mod)

    p = sub.add_parser("predictors", parents=[common], help="predictor table for mazes")
    p.add_argument("mazes", nargs="*", help="maze files or fixture names (default: all fixtures)")
    p.add_argument("--n-sims", type=int, default=200)
    p.add_argument("--mode", choices=("exact", "rollouts"), default="exact")
    p.add_argument("--rollouts", type=int, default=1000)
    p.add_argument("--opt-samples", type=int, default=100)
    p.add_argument("--spectral", choices=("fiedler", "paper-literal"), default="fiedler")
    p.add_argument("--trajectories", help="JSON mapping maze id to a list of [x, y] cells")
    p.add_argument("--zscore", action="store_true")
    p.set_defaults(func=cmd_predictors)

    p = sub.add_parser("fit", parents=[common, meta], help="grid-search the noise parameters")
    p.add_argument("mazes", nargs="*")
    p.add_argument("--responses", required=True)
    p.add_argument("--measure")
    p.add_argument("--grid", help="JSON object of parameter lists")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", parents=[common], help="regress responses on predictors")
    p.add_argument("--table", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--raw", action="store_true", help="skip z-scoring the predictors")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("render", parents=[common], help="SVG heatmap of obstacle scores")
    p.add_argument("maze")
    p.add_argument("--scores", help="comma-separated scores (default: VGC marginals)")
    p.add_argument("--normalization", choices=("unit", "minmax"), default="unit")
    p.add_argument("--max-size", type=int, default=None)
    p.set_defaults(func=cmd_render)
    return parser


# parent options are shared objects, so per-command defaults are filled in after parsing
COMMAND_DEFAULTS = {
    "predictors": {"format": "csv"},
    "fit": {"max_size": 3},
}


def _fill_defaults(args: argparse.Namespace) -> argparse.Namespace:
    for key, value in COMMAND_DEFAULTS.get(args.command, {}).items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.format is None:
        args.format = "json"
    return args


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return _fill_defaults(args)
    try:
        config = json.loads(Path(args.config).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(config, dict):
        parser.error("config must be a JSON object")
    config = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = sorted(set(config) - set(vars(args)) - {"command", "func"})
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**{k: v for k, v in config.items() if k not in ("command", "func")})
    return _fill_defaults(parser.parse_args(argv))


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"construal {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"construal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
