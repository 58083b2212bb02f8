"""Command-line entry point: ``droneho <command> [options]``.

Exit status: 0 on success, 1 when the input data or configuration fails
validation, 2 for usage errors (unknown flags, missing input files).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment
from .config import OUTPUT_DIR_ENV, RunConfig, from_mapping, load_config
from .dqn import DQNTrainer, TrainConfig
from .errors import DronehoError
from .experiment import FixedPolicies
from .mdp import HandoverEnv, RewardWeights
from .nn import MlpModel
from .radio_env import RsrpGrid, build_grid, generate_synthetic_samples, import_samples, write_samples
from .tabular import QTable, train_tabular
from .trajectory import Trajectory

log = logging.getLogger("droneho")

EXIT_DATA = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, flights: bool = False) -> None:
    p.add_argument("--config", type=Path, help="YAML config file; flags override its values")
    p.add_argument("--manifest", type=Path,
                   help=f"re-run with the resolved config stored in a previous run's manifest.json")
    p.add_argument("--out", dest="output_dir",
                   help=f"output directory (default from config, or ${OUTPUT_DIR_ENV}, else ./out)")
    p.add_argument("--seed", type=int, help="master seed for every random stream")
    p.add_argument("--bin-size", dest="bin_size", type=float, help="bin edge in meters (default 50)")
    p.add_argument("--k", type=int, help="number of candidate cells per decision (default 6)")
    if flights:
        p.add_argument("--flights", type=int, help="number of random routes to fly (default 2000)")
        p.add_argument("--workers", type=int, help="worker processes for flights (default 1)")
        p.add_argument("--weights", help="comma-separated w_ho:w_rsrp pairs, e.g. 0:1,1:9,5:5")
        p.add_argument("--grid", dest="grid_file", help="grid CSV from `map generate` / `map import`")
        p.add_argument("--samples", dest="samples_file", help="samples CSV to bin instead of a synthetic map")
        p.add_argument("--samples-per-cell", dest="samples_per_cell", type=int,
                       help="synthetic samples per cell when no grid or samples file is given (default 10000)")
    _train_flags(p)


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--episodes", dest="dqn.episodes", type=int, help="DQN episodes n (default 120)")
    p.add_argument("--steps", dest="dqn.steps", type=int, help="DQN steps per episode T (default 1000)")
    p.add_argument("--tabular-episodes", dest="tabular.episodes", type=int, help="tabular episodes (default 120)")
    p.add_argument("--tabular-steps", dest="tabular.steps", type=int, help="tabular steps per episode (default 1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="droneho", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_map = sub.add_parser("map", help="build an RSRP grid")
    map_sub = p_map.add_subparsers(dest="action", required=True, metavar="action")
    p = map_sub.add_parser("generate", help="synthesize samples from the layout and bin them")
    _common(p)
    p.add_argument("--samples-per-cell", dest="samples_per_cell", type=int, help="default 10000")
    p.add_argument("--write-samples", action="store_true", help="also write samples.csv")
    p = map_sub.add_parser("import", help="bin a samples CSV (x_m,y_m,cell_id,rsrp_dbm)")
    _common(p)
    p.add_argument("--samples", dest="samples_file", required=True, help="samples CSV")

    p_route = sub.add_parser("route", help="random routes")
    route_sub = p_route.add_subparsers(dest="action", required=True, metavar="action")
    p = route_sub.add_parser("sample", help="write the routes flown by eval/compare")
    _common(p)
    p.add_argument("--count", type=int, default=1, help="number of routes (default 1)")
    p.add_argument("--first", type=int, default=0, help="first flight index (default 0)")

    p_train = sub.add_parser("train", help="train a learner on one route")
    train_sub = p_train.add_subparsers(dest="action", required=True, metavar="action")
    for name in ("tabular", "dqn"):
        p = train_sub.add_parser(name, help=f"{name} Q-learning on one route")
        _common(p)
        p.add_argument("--grid", dest="grid_file", required=True, help="grid CSV")
        p.add_argument("--route", required=True, help="route CSV (idx,x_m,y_m,direction_idx)")
        p.add_argument("--weights", required=True, help="one w_ho:w_rsrp pair")
        if name == "dqn":
            p.add_argument("--checkpoint-every", type=int, default=0,
                           help="write model and training state every N episodes (default off)")

    p = sub.add_parser("eval", help="fly random routes under one scheme and write metrics")
    _common(p, flights=True)
    p.add_argument("--scheme", choices=("dqn", "tabular", "dp", "baseline"), default="dqn",
                   help="policy to evaluate against the baseline (default dqn)")
    p.add_argument("--model", help="evaluate this saved DQN model on every route instead of training")
    p.add_argument("--table", help="evaluate this saved Q-table on every route instead of training")

    p = sub.add_parser("compare", help="baseline vs tabular vs DQN over weights (config `schemes`)")
    _common(p, flights=True)
    p.add_argument("--schemes", help="comma-separated subset of baseline,tabular,dqn,dp")
    return parser


_NOT_CONFIG = {"command", "action", "verbose", "config", "manifest", "write_samples", "count", "first",
               "route", "checkpoint_every", "scheme", "model", "table"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    if args.command == "eval":
        overrides["schemes"] = "baseline" if args.scheme == "baseline" else f"baseline,{args.scheme}"
    if getattr(args, "manifest", None):
        if args.config:
            raise UsageError("--config and --manifest are mutually exclusive")
        manifest = json.loads(_existing(args.manifest).read_text())
        if manifest.get("command") != _command_name(args):
            raise UsageError(f"manifest was written by `{manifest.get('command')}`, not `{_command_name(args)}`")
        data = dict(manifest["config"])
        for key, value in overrides.items():
            if value is None:
                continue
            if "." in key:
                section, sub = key.split(".", 1)
                data[section] = {**data.get(section, {}), sub: value}
            else:
                data[key] = value
        return from_mapping(data)
    if args.config is not None:
        _existing(args.config)
    return load_config(args.config, overrides)


def _existing(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    return path


def _command_name(args) -> str:
    action = getattr(args, "action", None)
    return args.command if action is None else f"{args.command} {action}"


# ----------------------------------------------------------------- commands

def cmd_map(args, cfg: RunConfig) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.action == "import":
        cfg.samples_file = str(_existing(cfg.samples_file))
    if args.action == "generate":
        cfg.samples_file = None
        cfg.grid_file = None
    grid = experiment.build_map(cfg)
    if args.action == "generate" and args.write_samples:
        layout = cfg.synthetic_layout()
        samples = generate_synthetic_samples(layout, cfg.samples_per_cell,
                                             experiment.substream_seed(cfg.seed, "map"))
        with (out / "samples.csv").open("w", newline="") as f:
            write_samples(samples, f)
    grid.save(out / "grid.csv")
    with (out / "association_map.csv").open("w", newline="") as f:
        grid.save_association_map(f)
    experiment.write_manifest(out, _command_name(args), cfg)
    log.info("wrote %s", out / "grid.csv")


def cmd_route(args, cfg: RunConfig) -> None:
    if args.count < 0 or args.first < 0:
        raise UsageError("--count and --first must be nonnegative")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for j in range(args.first, args.first + args.count):
        route = experiment.flight_route(cfg, j)
        with (out / f"route_{j:04d}.csv").open("w", newline="") as f:
            route.write_csv(f)
    experiment.write_manifest(out, "route sample", cfg, {"first": args.first, "count": args.count})


def _load_env(args, cfg: RunConfig) -> HandoverEnv:
    grid = RsrpGrid.load(_existing(cfg.grid_file))
    with _existing(args.route).open(newline="") as f:
        route = Trajectory.read_csv(f, cfg.step_length)
    return HandoverEnv(grid, route, RewardWeights.parse(args.weights), cfg.k)


def cmd_train(args, cfg: RunConfig) -> None:
    env = _load_env(args, cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"route": str(args.route), "weights": args.weights}
    if args.action == "tabular":
        tcfg = cfg.tabular_config(experiment.substream_seed(cfg.seed, "tabular", 0, 0))
        table = train_tabular(env, tcfg)
        table.save(out / "qtable.csv", env.weights, tcfg.discount)
        extra["tabular"] = tcfg.to_dict()
    else:
        tcfg = cfg.train_config(experiment.substream_seed(cfg.seed, "dqn", 0, 0))
        trainer = DQNTrainer(env, tcfg)
        model = trainer.run(out / "checkpoints" if args.checkpoint_every else None, args.checkpoint_every)
        model.save(out / "model.json")
        extra["dqn"] = tcfg.to_dict()
    experiment.write_manifest(out, _command_name(args), cfg, extra)


def cmd_flights(args, cfg: RunConfig) -> None:
    fixed = None
    if getattr(args, "model", None) or getattr(args, "table", None):
        fixed = FixedPolicies(
            dqn_model=MlpModel.load(_existing(args.model)) if args.model else None,
            table=QTable.load(_existing(args.table)) if args.table else None,
        )
    if cfg.grid_file:
        _existing(cfg.grid_file)
    if cfg.samples_file:
        _existing(cfg.samples_file)
    grid = experiment.build_map(cfg)

    def progress(done, total):
        log.info("flight %d/%d", done, total)

    results = experiment.run_flights(grid, cfg, fixed, progress)
    report = experiment.build_report(cfg, results)
    out = Path(cfg.output_dir)
    experiment.write_report(report, out)
    extra = {}
    if fixed is not None:
        extra["fixed_policies"] = {"model": args.model, "table": args.table}
    elif "dqn" in cfg.scheme_list:
        t = cfg.train_config()
        defaults = TrainConfig()
        extra["dqn_training"] = {"episodes": t.episodes, "steps": t.steps,
                                 "reduced": (t.episodes, t.steps) != (defaults.episodes, defaults.steps)}
    experiment.write_manifest(out, _command_name(args), cfg, extra)
    log.info("wrote %s", out / "metrics.csv")


COMMANDS = {"map": cmd_map, "route": cmd_route, "train": cmd_train, "eval": cmd_flights, "compare": cmd_flights}


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"droneho: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DronehoError, ValueError, KeyError) as exc:
        print(f"droneho: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
