"""Command-line entry point: ``fdr-gcn <stage> [options]``."""

import argparse
import os
import sys
from pathlib import Path
from typing import List, NoReturn, Sequence

from fastmcp.utilities.logging import configure_logging, get_logger

from .config import load_pipeline_config
from .exceptions import FdrGcnError
from .pipeline import STAGES, StageResult, cmd_pipeline
from .version import get_project_info

logger = get_logger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]

STAGE_HELP = {
    "graph": "parse the netlist and write <circuit>.gml",
    "embed": "node2vec features of the circuit graph",
    "labels": "fault injection campaign, writes labels.csv",
    "train": "select training flip-flops and fit the GCN",
    "predict": "predict the FDR of every flip-flop",
    "report": "compare predictions against simulated labels",
    "pipeline": "run all stages in order",
}


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid int value: '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be a non-negative integer, got {value}")
    return value


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=_seed, help="base seed, re-derives every stage seed")
    common.add_argument("--workdir", type=Path, help="artifact directory (default: work)")
    common.add_argument("--netlist", type=Path, help="netlist source (.v or .json)")
    common.add_argument(
        "--log-level",
        choices=LOG_LEVELS,
        default=os.environ.get("FDRGCN_LOG_LEVEL", "WARNING").upper(),
        help="logging level (default: WARNING, env FDRGCN_LOG_LEVEL)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    info = get_project_info()
    parser = _ArgumentParser(
        prog="fdr-gcn",
        description=info["description"],
        epilog=(
            "Defaults: walks 10x40 (p=q=1), D=16, window 5, 5 negatives, "
            "GCN [16,4,2,1] tanh/logistic, Adam lr 0.01, 2000 epochs, "
            "1024-cycle random workload, 64 injections per flip-flop, "
            "5 training flip-flops, 20 histogram bins, seed 0."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {info['version']}")
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    common = _common_options()
    for name, help_text in STAGE_HELP.items():
        subparsers.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def _print_results(results: Sequence[StageResult]) -> None:
    for result in results:
        for path in result.artifacts:
            print(f"{result.stage}\t{path}")


def main(argv: List[str] | None = None) -> int:
    """Run one subcommand and return its exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level)

    try:
        cfg = load_pipeline_config(
            args.config, seed=args.seed, workdir=args.workdir, netlist=args.netlist
        )
        if args.command == "pipeline":
            results = cmd_pipeline(cfg)
        else:
            results = [STAGES[args.command](cfg)]
    except FdrGcnError as e:
        logger.error(
            f"{args.command} failed: {e}",
            extra={"command": args.command, "exit_code": e.exit_code},
        )
        print(f"fdr-gcn {args.command}: error: {e}", file=sys.stderr)
        return e.exit_code

    _print_results(results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
