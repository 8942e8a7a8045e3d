import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from flash_max.errors import EXIT_OK, EXIT_USAGE, ConfigError, FlashMaxError
from flash_max.models import Activation, Experiment, GroundTruthId, Setup

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

TRAINING_COMMANDS = ("train", "race", "time-budget", "data-budget", "ablation")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ground_truth(text: str) -> GroundTruthId:
    try:
        return GroundTruthId.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", "-c", default=None, help="Path to an experiment config (YAML or JSON)")
    common.add_argument("--seed", type=int, default=None, help="Base random seed")
    common.add_argument("--workers", type=int, default=None, help="Worker threads for batch evaluation")
    common.add_argument("--output-dir", "-o", default=None, help="Directory for run artifacts")
    common.add_argument("--log", "-l", default=None, help="Path to log file (DEBUG level)")
    common.add_argument("--verbose", "-v", action="store_true", help="Log progress to stderr")
    return common


def _problem_flags() -> argparse.ArgumentParser:
    problem = _Parser(add_help=False)
    problem.add_argument("--ground-truth", "-g", type=_ground_truth, default=None,
                         help="plane_waves, radial_waves, hopf_fibration or random_solution[:seed]")
    problem.add_argument("--setup", choices=[s.value for s in Setup], default=None)
    problem.add_argument("--n-val", type=int, default=None, help="Validation points")
    return problem


def _training_flags() -> argparse.ArgumentParser:
    training = _Parser(add_help=False)
    training.add_argument("--width-half", "-W", type=int, default=None, help="Neurons per sign per branch")
    training.add_argument("--activation", choices=[a.value for a in Activation], default=None)
    training.add_argument("--target", type=float, default=None, help="Target relative validation error")
    training.add_argument("--budget", type=float, default=None, help="Wall-clock budget per run in seconds")
    training.add_argument("--max-epochs", type=int, default=None)
    training.add_argument("--batch-size", type=int, default=None)
    training.add_argument("--n-train", type=int, default=None, help="Training observations")
    training.add_argument("--repeats", type=int, default=None, help="Number of seeds (seed, seed+1, ...)")
    return training


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="flash-max",
        description="Maxwell-exact shallow networks: training, verification and experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common, problem, training = _common_flags(), _problem_flags(), _training_flags()

    helps = {
        "train": "Train one model",
        "race": "Train until a target validation error is reached",
        "time-budget": "Train for a fixed wall-clock budget",
        "data-budget": "Sweep the number of training points",
        "ablation": "Sweep width and activation",
    }
    for name in TRAINING_COMMANDS:
        cmd = sub.add_parser(name, parents=[common, problem, training], help=helps[name])
        if name == "data-budget":
            cmd.add_argument("--n-points", type=int, nargs="+", default=None)
        if name == "ablation":
            cmd.add_argument("--widths", type=int, nargs="+", default=None)
            cmd.add_argument("--activations", choices=[a.value for a in Activation], nargs="+", default=None)

    sub.add_parser("verify", parents=[common], help="Check residual, multiplier and ground-truth properties")
    sub.add_parser("gradcheck", parents=[common], help="Compare analytic gradients with finite differences")

    exact = sub.add_parser("exact-init", parents=[common], help="Build an exact cos network from trig terms")
    exact.add_argument("terms", help="JSON file with a list of {xi, amp_cos, amp_sin} terms")
    exact.add_argument("--output", default=None, help="Checkpoint path (default: OUTPUT_DIR/exact_init/checkpoint.json)")

    export = sub.add_parser("export-field", parents=[common, problem], help="Write a field on a regular grid as CSV")
    export.add_argument("--checkpoint", default=None, help="Export this model's prediction instead of the ground truth")
    export.add_argument("--resolution", type=int, default=None)
    export.add_argument("--times", type=float, nargs="+", default=None)

    evaluate = sub.add_parser("eval", parents=[common, problem], help="Evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    return parser


def setup_logging(log_path, verbose: bool) -> None:
    if log_path:
        logging.basicConfig(filename=log_path, level=logging.DEBUG, format=LOG_FORMAT)
        if verbose:
            handler = logging.StreamHandler(sys.stderr)
            handler.setLevel(logging.INFO)
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logging.getLogger().addHandler(handler)
    elif verbose:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO, format=LOG_FORMAT)


def resolve_config(args):
    from flash_max.config import config_from_dict, load_config

    config = load_config(args.config) if args.config else config_from_dict({})
    experiment = Experiment(args.command.replace("-", "_"))

    top = {"experiment": experiment}
    for flag, key in (("seed", "seed"), ("workers", "workers"), ("repeats", "repeats"),
                      ("ground_truth", "ground_truth"), ("n_points", "n_points"), ("widths", "widths")):
        value = getattr(args, flag, None)
        if value is not None:
            top[key] = value
    if getattr(args, "output_dir", None):
        top["output_dir"] = Path(args.output_dir)
    if getattr(args, "setup", None):
        top["setup"] = Setup(args.setup)
    if getattr(args, "activations", None):
        top["activations"] = [Activation(a) for a in args.activations]

    train = {}
    for flag, key in (("width_half", "width_half"), ("target", "target_rel_error"),
                      ("budget", "wall_clock_budget_s"), ("max_epochs", "max_epochs"),
                      ("batch_size", "batch_size")):
        value = getattr(args, flag, None)
        if value is not None:
            train[key] = value
    if getattr(args, "activation", None):
        train["activation"] = Activation(args.activation)

    sampling = {}
    for flag in ("n_train", "n_val"):
        value = getattr(args, flag, None)
        if value is not None:
            sampling[flag] = value

    export = {}
    if getattr(args, "resolution", None) is not None:
        export["resolution"] = args.resolution
    if getattr(args, "times", None):
        export["times"] = args.times

    config = dataclasses.replace(
        config,
        train=dataclasses.replace(config.train, **train),
        sampling=dataclasses.replace(config.sampling, **sampling),
        export=dataclasses.replace(config.export, **export),
        **top,
    )
    config.validate()
    return config


def _fmt(key: str, value) -> str:
    from flash_max.metrics import format_percent

    if value is None:
        return "-"
    if isinstance(value, float):
        if "error" in key:
            return format_percent(value)
        if "seconds" in key or key.startswith("time"):
            return f"{value:.1f}s"
        return f"{value:.3g}"
    return str(value)


def print_rows(rows: list[dict], columns: list[str]) -> None:
    cells = [[_fmt(c, row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for r in cells:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)))


def _print_aggregate(summary: dict) -> None:
    for key, stats in summary.items():
        if isinstance(stats, dict) and "mean" in stats:
            print(f"{key}: {_fmt(key, stats['mean'])} ± {_fmt(key, stats['sem'])} (n={stats['n']})")


def dispatch(args, config) -> None:
    from flash_max import experiments
    from flash_max.persistence import report_to_dict

    command = args.command
    if command == "train":
        record = experiments.run_train(config)
        print(f"best error {_fmt('error', record.best_error)} after {record.steps} steps; run dir {record.run_dir}")
    elif command == "race":
        result = experiments.run_race(config)
        print_rows(result.rows, ["seed", "converged", "compute_seconds", "best_error", "residual_rmse"])
        _print_aggregate(result.aggregate)
    elif command == "time-budget":
        result = experiments.run_time_budget(config)
        print_rows(result.rows, ["seed", "best_error", "time_to_best", "steps", "residual_rmse"])
        _print_aggregate(result.aggregate)
    elif command == "data-budget":
        result = experiments.run_data_budget(config)
        print_rows(result.rows, ["n_points", "min_error", "time_to_min"])
    elif command == "ablation":
        result = experiments.run_ablation(config)
        print_rows(result.rows, ["width_half", "activation", "time_to_target", "min_error", "time_to_min"])
    elif command == "verify":
        result = experiments.run_verify(config)
        print_rows(result.rows, ["check", "statistic", "bound", "passed"])
    elif command == "gradcheck":
        result = experiments.run_gradcheck(config)
        print(f"max relative error {result.aggregate['max_rel_error']:.3g} over {len(result.rows)} cases")
    elif command == "exact-init":
        output = Path(args.output) if args.output else config.output_dir / "exact_init" / "checkpoint.json"
        print(experiments.run_exact_init(Path(args.terms), output))
    elif command == "export-field":
        checkpoint = Path(args.checkpoint) if args.checkpoint else None
        print(experiments.run_export_field(config, checkpoint))
    elif command == "eval":
        report = experiments.run_eval(config, Path(args.checkpoint))
        for key, value in report_to_dict(report).items():
            print(f"{key}: {_fmt(key, value)}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log, args.verbose)

    try:
        config = resolve_config(args)
        dispatch(args, config)
    except FlashMaxError as exc:
        log.error("%s failed: %s", args.command, exc)
        print(f"flash-max: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK
