import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from app.routes import commands


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icmc", description="ICM fault-tolerant circuit compiler")
    parser.add_argument("--log-level", default=None, help="overrides ICM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--db", dest="database", help="decomposition database (default: ICM_DATABASE or the seed)")
        p.add_argument("--out", dest="output_stem", help="output path without suffix")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("decompose", help="recognize a unitary spec file into nicm entries")
    p.add_argument("input_path")
    p.add_argument("--force", action="store_true", help="replace entries with the same name")
    p.add_argument("--epsilon", type=float, help="tolerance handed to the approximation hook")
    common(p)

    p = sub.add_parser("processraw", help="expand nicm gates into primitives")
    p.add_argument("input_path")
    common(p)

    p = sub.add_parser("convertft", help="compile primitives to .circ, .geom and .svg")
    p.add_argument("input_path")
    p.add_argument("--rounds", dest="distillation_rounds", type=int)
    p.add_argument("--dup", dest="duplicate_distillers", type=int)
    p.add_argument("--mode", dest="teleport_mode", choices=["simple", "det"])
    common(p)

    p = sub.add_parser("verify", help="check an entry, circuit file or distiller with the simulator")
    p.add_argument("input_path", metavar="target", help="entry name, circuit file or 'distillation'")
    p.add_argument("--mode", dest="teleport_mode", choices=["simple", "det"])
    p.add_argument("--kind", choices=["A", "Y"])
    p.add_argument("--p", dest="ps", type=float, nargs="+")
    p.add_argument("--dup", dest="duplicate_distillers", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--expect", help="entry name whose analytic unitary a circuit file must match")
    common(p)

    p = sub.add_parser("render", help="draw an existing .circ (and .geom) as SVG")
    p.add_argument("input_path")
    common(p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv("ICM_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logger = logging.getLogger(__name__)

    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "log_level")}
    try:
        config = commands.PipelineConfig.from_env(**overrides)
    except ValueError as e:
        logger.error(f"Invalid configuration: {e}")
        return commands.EXIT_IO
    logger.info(f"Running {args.command}")
    return commands.run(commands.COMMANDS[args.command], config)


if __name__ == "__main__":
    sys.exit(main())
