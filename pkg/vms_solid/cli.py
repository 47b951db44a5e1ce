"""
CLI - Command-line driver.

Subcommands:
- run:     run a preset or case file, write VTK snapshots and probe CSVs
- study:   mesh convergence study of a preset
- presets: list presets, or print one as a case file
- verify:  method verification checks

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from config.settings import get_settings
from vms_solid import __version__
from vms_solid.tools.presets import PresetsTool
from vms_solid.tools.run import RunTool
from vms_solid.tools.study import StudyTool
from vms_solid.tools.verify import VerifyTool

logger = logging.getLogger(__name__)

# Tool registry
TOOLS = {
    "run": RunTool(),
    "study": StudyTool(),
    "presets": PresetsTool(),
    "verify": VerifyTool(),
}

DEFAULT_DENSITIES = [4, 8, 16, 32]


def configure_logging(quiet: bool = False) -> None:
    """Root logging set up from LOG_LEVEL; --quiet shows warnings and errors only."""
    level_name = "WARNING" if quiet else get_settings().runtime.log_level.upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors.")

    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a case key, e.g. --set mesh.n=8 (repeatable).",
    )
    outputs.add_argument("--out", dest="output_dir", default=None, help="Output directory.")

    parser = argparse.ArgumentParser(
        prog="vms_solid",
        description="Stabilized P1/P1 mixed finite elements for transient solid dynamics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common, outputs], help="Run a preset or case file.")
    run.add_argument("case", help="Preset name or case file path.")
    run.add_argument("--no-output", dest="write_outputs", action="store_false", help="Do not write files.")

    study = subparsers.add_parser("study", parents=[common, outputs], help="Mesh convergence study.")
    study.add_argument("preset", help="Preset name.")
    study.add_argument(
        "--densities",
        type=int,
        nargs="+",
        default=DEFAULT_DENSITIES,
        help="Mesh densities (default: 4 8 16 32).",
    )

    presets = subparsers.add_parser("presets", parents=[common], help="List presets.")
    presets.add_argument("name", nargs="?", default=None, help="Print this preset as a case file.")

    verify = subparsers.add_parser("verify", parents=[common], help="Run the verification checks.")
    verify.add_argument("--quick", action="store_true", help="Skip the slower studies.")
    return parser


def tool_arguments(args: argparse.Namespace) -> Dict[str, Any]:
    """Keyword arguments of the tool behind a parsed command line."""
    if args.command == "run":
        return {
            "case": args.case,
            "overrides": args.overrides,
            "output_dir": args.output_dir,
            "write_outputs": args.write_outputs,
        }
    if args.command == "study":
        return {
            "preset": args.preset,
            "densities": args.densities,
            "overrides": args.overrides,
            "output_dir": args.output_dir,
        }
    if args.command == "presets":
        return {"name": args.name}
    return {"quick": args.quick}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse the command line, run one tool and print its output.

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet or get_settings().runtime.quiet)

    tool = TOOLS[args.command]
    arguments = tool_arguments(args)
    logger.debug(f"Executing tool: {args.command} with args: {arguments}")

    try:
        result = tool.execute(**arguments)
    except Exception as e:
        logger.exception(f"Error executing {args.command}: {e}")
        return 1

    stream = sys.stderr if "error" in result else sys.stdout
    print(result.get("formatted_output", str(result)), file=stream)
    return int(result.get("exit_code", 0))


if __name__ == "__main__":
    sys.exit(main())
