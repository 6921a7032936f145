"""Command-line front end: search, match, scaling, solve.

Config files are flat key=value lines ('#' comments allowed). Match files
address the two engines with engineA. / engineB. prefixes:

    game = nim:3,4,5
    evaluatorA = deceptive
    engineA.budget = evaluations
    engineA.budget_amount = 256
    engineB.transpositions = false

Exit status is 0 on success and 1 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys

from .arena import MatchConfig, move_log, play_match, scaling_report
from .envs import make_env
from .evaluators import make_evaluator
from .oracle import solved_table
from .search import SearchConfig, run_search

# (flag, SearchConfig field, type) for everything settable by plain value
_VALUE_FLAGS = [
    ("--q-epsilon", "q_epsilon", float),
    ("--q-weight", "q_weight", float),
    ("--eps-greedy", "epsilon_greedy", float),
    ("--eps-checks", "epsilon_checks", float),
    ("--c-puct-init", "c_puct_init", float),
    ("--c-puct-base", "c_puct_base", float),
    ("--node-tau", "node_tau", float),
    ("--tau", "tau", float),
    ("--mini-batch", "mini_batch_size", int),
    ("--virtual-loss", "virtual_loss", float),
    ("--q-init", "q_init", float),
    ("--dirichlet-epsilon", "dirichlet_epsilon", float),
    ("--dirichlet-alpha", "dirichlet_alpha", float),
    ("--threads", "threads", int),
    ("--seed", "seed", int),
    ("--capacity", "capacity", int),
    ("--stall-rounds", "stall_rounds_limit", int),
    ("--endgame-oracle", "endgame_oracle", str),
]

# --no-X clears the corresponding feature toggle
_TOGGLE_FLAGS = [
    ("--no-transpositions", "transpositions"),
    ("--no-terminal-solver", "terminal_solver"),
    ("--no-eps-greedy", "eps_greedy"),
    ("--no-check-enhance", "check_enhance"),
    ("--no-q-boost", "q_boost"),
    ("--no-stop-when-solved", "stop_when_solved"),
]


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("engine")
    for flag, dest, typ in _VALUE_FLAGS:
        group.add_argument(flag, dest=dest, type=typ, default=None)
    for flag, dest in _TOGGLE_FLAGS:
        group.add_argument(flag, dest=dest, action="store_false", default=None)
    group.add_argument("--no-explore", action="store_true",
                       help="disable both exploration mechanisms")
    group.add_argument("--plain", action="store_true",
                       help="tree-PUCT baseline: all enhancements off")
    budget = group.add_mutually_exclusive_group()
    budget.add_argument("--budget-sims", type=int, default=None)
    budget.add_argument("--budget-evals", type=int, default=None)
    budget.add_argument("--budget-ms", type=int, default=None)


def _config_from_args(args) -> SearchConfig:
    data = SearchConfig().to_dict()
    if getattr(args, "config", None):
        data.update(_read_kv(args.config))
    for _, dest, _ in _VALUE_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            data[dest] = value
    for _, dest in _TOGGLE_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            data[dest] = value
    if args.no_explore:
        data["eps_greedy"] = False
        data["check_enhance"] = False
    if args.plain:
        for key in ("transpositions", "terminal_solver", "eps_greedy",
                    "check_enhance", "q_boost"):
            data[key] = False
    if args.budget_sims is not None:
        data["budget"], data["budget_amount"] = "simulations", args.budget_sims
    elif args.budget_evals is not None:
        data["budget"], data["budget_amount"] = "evaluations", args.budget_evals
    elif args.budget_ms is not None:
        data["budget"], data["budget_amount"] = "milliseconds", args.budget_ms
    return SearchConfig.from_dict(data)


def _read_kv(path: str) -> dict:
    data = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            data[key.strip()] = value.strip()
    return data


def _parse_match_file(path: str) -> MatchConfig:
    data = _read_kv(path)
    engine_a = SearchConfig().to_dict()
    engine_b = SearchConfig().to_dict()
    top = {}
    for key, value in data.items():
        if key.startswith("engineA."):
            engine_a[_check_engine_key(key, key[8:])] = value
        elif key.startswith("engineB."):
            engine_b[_check_engine_key(key, key[8:])] = value
        else:
            top[key] = value
    config = MatchConfig(engine_a=SearchConfig.from_dict(engine_a),
                         engine_b=SearchConfig.from_dict(engine_b))
    for key, value in top.items():
        if key == "game":
            config.game = value
        elif key == "evaluatorA":
            config.evaluator_a = value
        elif key == "evaluatorB":
            config.evaluator_b = value
        elif key == "opening_plies":
            config.opening_plies = int(value)
        elif key == "opening_count":
            config.opening_count = int(value)
        elif key == "seed":
            config.seed = int(value)
        else:
            raise ValueError(f"unknown match config key {key!r}")
    config.validate()
    return config


def _check_engine_key(full: str, key: str) -> str:
    if key not in {f.name for f in dataclasses.fields(SearchConfig)}:
        raise ValueError(f"unknown engine config key {full!r}")
    return key


def _emit(payload, out: str | None, pretty: bool) -> None:
    text = json.dumps(payload, indent=2 if pretty else None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _cmd_search(args) -> int:
    env = make_env(args.game)
    config = _config_from_args(args)
    state = env.initial_state()
    if args.moves:
        for token in args.moves.split(","):
            state = env.apply(state, int(token))
    evaluator = make_evaluator(args.evaluator, env)
    result = run_search(env, evaluator, state, config)
    payload = result.to_dict()
    if not args.mem_stats:
        payload.pop("memory")
    _emit(payload, args.out, args.pretty)
    return 0


def _cmd_match(args) -> int:
    config = _parse_match_file(args.config)
    result = play_match(config)
    _emit(result.to_dict(), args.out, args.pretty)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(move_log(result, config.game))
    return 0


def _cmd_scaling(args) -> int:
    config = _config_from_args(args)
    budgets = [int(b) for b in args.budgets.split(",")]
    rows = scaling_report(args.game, config, budgets,
                          opening_count=args.openings,
                          opening_plies=args.plies,
                          evaluator=args.evaluator, seed=config.seed)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _cmd_solve(args) -> int:
    env = make_env(args.game)
    table = solved_table(env, node_limit=args.limit)
    entries = [
        {
            "position_hash": key.position_hash,
            "ply": key.ply,
            "outcome": entry.outcome.name,
            "distance": entry.distance,
            "optimal_actions": list(entry.optimal_actions),
        }
        for key, entry in sorted(table.items())
    ]
    _emit({"game": env.game_id, "states": len(entries), "entries": entries},
          args.out, args.pretty)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcgs",
                                     description="graph search engine tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p_search = sub.add_parser("search", help="search one position, emit JSON")
    p_search.add_argument("--game", default="tictactoe")
    p_search.add_argument("--moves", default="",
                          help="comma-separated actions applied from the initial state")
    p_search.add_argument("--evaluator", default="heuristic",
                          choices=["uniform", "heuristic", "deceptive", "oracle"])
    p_search.add_argument("--config", default=None, help="key=value config file")
    p_search.add_argument("--mem-stats", action="store_true",
                          help="include the store memory report in the output")
    p_search.add_argument("--pretty", action="store_true")
    p_search.add_argument("--out", default=None)
    _add_engine_flags(p_search)
    p_search.set_defaults(func=_cmd_search)

    p_match = sub.add_parser("match", help="engine-vs-engine match from a config file")
    p_match.add_argument("--config", required=True)
    p_match.add_argument("--out", default=None)
    p_match.add_argument("--log", default=None, help="write a per-game move log")
    p_match.add_argument("--pretty", action="store_true")
    p_match.set_defaults(func=_cmd_match)

    p_scaling = sub.add_parser("scaling", help="budget scaling report as CSV")
    p_scaling.add_argument("--game", default="tictactoe")
    p_scaling.add_argument("--budgets", default="32,64,128",
                           help="ascending comma-separated budget amounts")
    p_scaling.add_argument("--openings", type=int, default=10)
    p_scaling.add_argument("--plies", type=int, default=2)
    p_scaling.add_argument("--evaluator", default="heuristic")
    p_scaling.add_argument("--config", default=None)
    p_scaling.add_argument("--out", default=None)
    _add_engine_flags(p_scaling)
    p_scaling.set_defaults(func=_cmd_scaling)

    p_solve = sub.add_parser("solve", help="dump the brute-force solution table")
    p_solve.add_argument("--game", default="tictactoe")
    p_solve.add_argument("--limit", type=int, default=None,
                         help="abort if the state count exceeds this")
    p_solve.add_argument("--pretty", action="store_true")
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
