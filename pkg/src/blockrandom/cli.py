"""Command line entry point: ``blockrandom {run,compare,sweep-ratio,sweep-batchsize}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, experiment
from .checkpoint import CheckpointError
from .config import ConfigError, load, preset_names
from .data import DataError
from .schedulers import ScheduleError, TrainingError

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SCHEDULE = 4
EXIT_TRAINING = 5
EXIT_IO = 6

log = logging.getLogger("blockrandom")


def _csv_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if min(values) < 1:
        raise argparse.ArgumentTypeError("batch sizes must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blockrandom", description="Block-wise mini-batch ordering experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help=f"JSON config file or preset name ({', '.join(preset_names())})")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--quiet", action="store_true", help="only print errors")

    sp = sub.add_parser("run", help="train one strategy and write all artifacts")
    common(sp)
    sp.add_argument("--strategy", help="strategy to train (default: first in the config)")
    sp = sub.add_parser("compare", help="train every configured strategy from the same initial network")
    common(sp)
    sp = sub.add_parser("sweep-ratio", help="validation score vs n_b / n_c")
    common(sp)
    sp.add_argument("--ratios", type=_csv_list, required=True, help="e.g. 1/64,1/16,1/4,1")
    sp.add_argument("--strategy", help="strategy to sweep (default: first in the config)")
    sp.add_argument("--jobs", type=int, default=1)
    sp = sub.add_parser("sweep-batchsize", help="final scores per strategy and batch size")
    common(sp)
    sp.add_argument("--sizes", type=_int_list, required=True, help="e.g. 32,64,128")
    sp.add_argument("--jobs", type=int, default=1)
    return p


def _emit(obj, quiet: bool) -> None:
    if not quiet:
        print(json.dumps(obj, indent=2, sort_keys=True))


def dispatch(args) -> int:
    cfg = load(args.config, seed=args.seed, out=args.out)
    if args.command == "run":
        r = experiment.run(cfg, args.strategy)
        _emit({"strategy": r.strategy.value, r.metric: {"train": r.train_metric, "valid": r.valid_metric},
               "out": cfg["out"]}, args.quiet)
    elif args.command == "compare":
        _emit(experiment.compare(cfg), args.quiet)
    elif args.command == "sweep-ratio":
        _emit(experiment.sweep_ratio(cfg, args.ratios, args.strategy, args.jobs), args.quiet)
    else:
        _emit(experiment.sweep_batchsize(cfg, args.sizes, args.jobs), args.quiet)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return dispatch(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ScheduleError as exc:
        log.error("schedule error: %s", exc)
        return EXIT_SCHEDULE
    except TrainingError as exc:
        log.error("training failed: %s", exc)
        return EXIT_TRAINING
    except (OSError, CheckpointError) as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
