"""
Run Tool - Execute one case from a preset or a case file.

This tool:
- Resolves the case (settings defaults < preset < case file < overrides)
- Runs the time loop (or the static load steps)
- Writes VTK snapshots and probe CSVs
- Returns the run report and a summary table
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.settings import get_settings
from vms_solid.cases.presets import resolve_case
from vms_solid.errors import SolidError
from vms_solid.simulation import Simulation

logger = logging.getLogger(__name__)


class RunTool:
    """Tool for running a single case."""

    description = "Run a case (preset name or case file) and write its outputs"

    parameters = {
        "case": {
            "type": "string",
            "description": "Preset name (e.g. cook_static) or path to a case file"
        },
        "overrides": {
            "type": "array",
            "description": "section.key=value overrides applied after the preset and file"
        },
        "output_dir": {
            "type": "string",
            "description": "Directory for VTK and CSV files (default: VMS_OUTPUT_DIR)"
        },
        "write_outputs": {
            "type": "boolean",
            "description": "Write VTK and CSV files (default: true)"
        }
    }

    required_params = ["case"]

    def __init__(self):
        self.settings = get_settings()

    def execute(
        self,
        case: str,
        overrides: Optional[List[str]] = None,
        output_dir: Optional[str] = None,
        write_outputs: bool = True,
    ) -> Dict[str, Any]:
        """
        Execute the run tool.

        Args:
            case: Preset name or case file path
            overrides: section.key=value strings
            output_dir: Output directory
            write_outputs: Write files

        Returns:
            Dict with the run report, exit code and formatted output
        """
        directory = Path(output_dir or self.settings.output.directory)
        try:
            config, base_dir = resolve_case(case, overrides or [])
            simulation = Simulation(config, output_dir=directory, base_dir=base_dir, write_outputs=write_outputs)
        except SolidError as e:
            logger.error(f"Cannot set up case {case}: {e}")
            return {
                "error": str(e),
                "exit_code": e.exit_code,
                "formatted_output": f"❌ {case}: {e}"
            }

        report = simulation.run()
        return {
            "case": config.name,
            "report": report.to_dict(),
            "exit_code": report.exit_status,
            "formatted_output": report.summary_table()
        }
