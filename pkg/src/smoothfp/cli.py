"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (invalid game, unsupported class,
failed thresholds), 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import game as gm
from .harness import ConfigError, ExperimentConfig, emit_plot_data, load_traces, run_experiment
from .oracles import OracleError, UnsupportedGameError, equilibrium_residuals, solve
from .regularizers import DEFAULT_BETA, get_regularizer

OK, FAILURE, USAGE = 0, 1, 2


def _load_game(path):
    try:
        return gm.load(path)
    except FileNotFoundError:
        raise _Usage(f"cannot read {path}")
    except gm.GameFormatError as exc:
        raise _Usage(f"{path}: {exc}")


class _Usage(Exception):
    pass


def cmd_check_game(args) -> int:
    game = _load_game(args.game)
    report = gm.validate(game)
    print(f"validation: {report}")
    print(f"class: {gm.classify(game)}")
    print(gm.check_ergodicity(game))
    return OK if report.ok else FAILURE


def cmd_gen_game(args) -> int:
    try:
        game_class = gm.GameClass(args.game_class, tuple(args.constants or ()))
    except ValueError as exc:
        raise _Usage(str(exc))
    actions = args.actions
    if len(actions) == 1:
        actions = actions * args.players
    if len(actions) != args.players:
        raise _Usage(f"--actions needs 1 or {args.players} counts")
    try:
        game = gm.random_ergodic_game(args.states, actions, game_class, args.mixing,
                                      np.random.default_rng(args.seed), args.discount)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE
    gm.save(game, args.out)
    print(f"wrote {args.out}")
    return OK


def cmd_solve_oracle(args) -> int:
    game = _load_game(args.game)
    try:
        reg = get_regularizer(args.regularizer)
    except ValueError as exc:
        raise _Usage(str(exc))
    try:
        result = solve(game, args.beta, reg, args.tol)
    except (UnsupportedGameError, OracleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE
    res = equilibrium_residuals(game, args.beta, reg, result.x, result.u)
    out = result.to_dict()
    out.update(beta=args.beta, regularizer=reg.name,
               rho_val=res.rho_val.tolist(), rho_br=res.rho_br.tolist())
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    print(f"value: {np.array2string(result.u, precision=6)}  residual: {result.residual:.3e}",
          file=sys.stderr)
    return OK if result.residual <= args.tol else FAILURE


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except FileNotFoundError:
        raise _Usage(f"cannot read {args.config}")
    except ConfigError as exc:
        raise _Usage(str(exc))
    if args.output:
        cfg.output = args.output
    report = run_experiment(cfg)
    done = sum(r.error is None for r in report.seeds)
    print(f"{done}/{len(report.seeds)} seeds finished; summary in {Path(cfg.output) / 'summary.json'}")
    for f in report.failures:
        print(f"seed {f['seed']}: {f['reason']}")
    return OK if report.passed else FAILURE


def cmd_plot_data(args) -> int:
    try:
        traces = load_traces(args.dir)
    except FileNotFoundError as exc:
        raise _Usage(str(exc))
    try:
        table = emit_plot_data(traces, args.metric)
    except KeyError as exc:
        raise _Usage(exc.args[0])
    if args.out:
        table.to_csv(args.out)
        print(f"wrote {len(table.rows)} rows to {args.out}")
    else:
        print(",".join(table.columns))
        for t, seed, v, m in table.rows:
            print(f"{t:.17g},{seed},{v:.17g},{m:.17g}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smoothfp", description="Smooth fictitious play in stochastic games.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-game", help="validate, classify and certify ergodicity of a game file")
    c.add_argument("--game", required=True, help="game JSON file")
    c.set_defaults(func=cmd_check_game)

    c = sub.add_parser("gen-game", help="generate a random ergodic game")
    c.add_argument("--states", type=int, required=True)
    c.add_argument("--players", type=int, default=2)
    c.add_argument("--actions", type=int, nargs="+", required=True,
                   help="action count per player (one value applies to all)")
    c.add_argument("--class", dest="game_class", default="General",
                   help=f"one of {', '.join(gm.GAME_CLASSES)}")
    c.add_argument("--constants", type=float, nargs="*", help="Team reward offsets per player")
    c.add_argument("--mixing", type=float, default=0.5, help="uniform mass mixed into each transition row")
    c.add_argument("--discount", type=float, default=0.5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_gen_game)

    c = sub.add_parser("solve-oracle", help="regularized values of a zero-sum or single-player game")
    c.add_argument("--game", required=True)
    c.add_argument("--beta", type=float, default=DEFAULT_BETA, help="regularization temperature")
    c.add_argument("--tol", type=float, default=1e-9)
    c.add_argument("--regularizer", default="entropy")
    c.add_argument("--out", help="result JSON file (default: stdout)")
    c.set_defaults(func=cmd_solve_oracle)

    c = sub.add_parser("run", help="run an experiment config")
    c.add_argument("--config", required=True)
    c.add_argument("--output", help="override the config's output directory")
    c.set_defaults(func=cmd_run)

    c = sub.add_parser("plot-data", help="long-format metric table from an experiment directory")
    c.add_argument("--dir", required=True, help="experiment output directory")
    c.add_argument("--metric", required=True)
    c.add_argument("--out", help="CSV file (default: stdout)")
    c.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
