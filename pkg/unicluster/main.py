"""
Unicluster Command Line

Uniquely determined hierarchical clusterings of finite measures:
1D piecewise-linear densities, dyadic grid densities and mixtures of
atoms, curves and planar densities.

To run:
    python -m unicluster.main cluster examples/twin_peaks.toml
    python -m unicluster.main approx saddle.toml --depths 4,5,6
    python -m unicluster.main tables --golden-dir unicluster/data/golden

Exit status is 0 on success and 2 when a definition is violated or the
input is malformed.
"""

import argparse
import logging
import sys
from typing import List, Optional

from unicluster import __version__
from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.routers.commands import COMMANDS

settings = get_settings()
logger = logging.getLogger("unicluster")


def configure_logging(level: str) -> None:
    """Single stderr handler on the package logger."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(level.upper())
    logger.propagate = False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unicluster", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--separation", help="disjoint | tau:<p/q> (overrides the spec file)")
    common.add_argument("--depth", type=int, help="grid depth for sampled densities")
    common.add_argument("--out-json", help="report path (default: UNICLUSTER_OUTPUT_DIR)")

    sub = parser.add_subparsers(dest="command", required=True)

    cluster = sub.add_parser("cluster", parents=[common], help="cluster a spec file")
    cluster.add_argument("spec")
    cluster.add_argument("--out-dot")

    adapted = sub.add_parser("check-adapted", parents=[common], help="is Q adapted to P?")
    adapted.add_argument("q_spec")
    adapted.add_argument("p_spec")

    approx = sub.add_parser("approx", parents=[common], help="cluster a density at increasing grid depths")
    approx.add_argument("spec")
    approx.add_argument("--depths", help="comma-separated, strictly increasing")
    approx.add_argument("--offset", help="margin p/q by which the grid box is enlarged")

    tables = sub.add_parser("tables", help="regenerate the example tables and diff against golden files")
    tables.add_argument("--golden-dir")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ClusteringError as e:
        logger.debug("[CLI] %s", e.to_dict())
        print(f"error: {e.code}: {e.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
