"""
Study Tool - Mesh convergence study of a preset.

Runs the preset once per mesh density and tabulates the first probe (the
tip displacement for the benchmark presets), the pressure oscillation
indicator and the observed self-convergence order. The table is written to
``study_<preset>.csv``.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from config.settings import get_settings
from vms_solid.cases.config import CaseConfig
from vms_solid.cases.diagnostics import observed_orders
from vms_solid.cases.presets import resolve_case
from vms_solid.errors import CaseConfigError, SolidError
from vms_solid.simulation import Simulation

logger = logging.getLogger(__name__)


class StudyTool:
    """Tool for mesh convergence studies."""

    description = "Run a preset over several mesh densities and report tip value, theta and order"

    parameters = {
        "preset": {
            "type": "string",
            "description": "Preset to refine (cook presets use mesh.n, box presets scale mesh.subdivisions)"
        },
        "densities": {
            "type": "array",
            "description": "Mesh densities, e.g. [4, 8, 16, 32]"
        },
        "overrides": {
            "type": "array",
            "description": "section.key=value overrides applied to every run"
        },
        "output_dir": {
            "type": "string",
            "description": "Directory for study_<preset>.csv"
        }
    }

    required_params = ["preset", "densities"]

    COLUMNS = ["n", "tip", "theta", "order"]

    def __init__(self):
        self.settings = get_settings()

    def refined(self, config: CaseConfig, n: int) -> CaseConfig:
        """
        Case at mesh density n.

        Raises:
            CaseConfigError: the geometry has no density parameter
        """
        kind = config.get("geometry.kind")
        if kind == "cook":
            return config.merged({"mesh.n": int(n)})
        if kind == "box":
            return config.merged({"mesh.subdivisions": tuple(int(s) * int(n) for s in config.get("mesh.subdivisions"))})
        raise CaseConfigError(f"{config.name}: {kind} geometry has no mesh density parameter")

    def write_table(self, rows: Sequence[Dict[str, Any]], path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for row in rows:
                writer.writerow(["" if row[c] is None else repr(row[c]) for c in self.COLUMNS])
        return path

    def execute(
        self,
        preset: str,
        densities: Sequence[int],
        overrides: Optional[List[str]] = None,
        output_dir: Optional[str] = None,
    ) -> Dict[str, Any]:
        """
        Execute the convergence study.

        Args:
            preset: Preset name
            densities: Mesh densities (sorted and de-duplicated before running)
            overrides: section.key=value strings
            output_dir: Output directory

        Returns:
            Dict with the rows, the CSV path and formatted output
        """
        densities = sorted({int(n) for n in densities})
        if not densities or densities[0] < 1:
            return {
                "error": "densities must be positive integers",
                "exit_code": 2,
                "formatted_output": "❌ densities must be positive integers"
            }

        rows: List[Dict[str, Any]] = []
        try:
            base, base_dir = resolve_case(preset, overrides or [])
            for n in densities:
                config = self.refined(base, n)
                simulation = Simulation(config, base_dir=base_dir, write_outputs=False)
                if not simulation.sampler.probes:
                    raise CaseConfigError(f"{preset} has no probe to tabulate")
                logger.info(f"Study {preset}: density {n}")
                report = simulation.run()
                if not report.success:
                    return {
                        "error": report.error,
                        "exit_code": report.exit_status,
                        "rows": rows,
                        "formatted_output": f"❌ {preset} at n={n}: {report.error}"
                    }
                tip = report.probe_values[simulation.sampler.probes[0].name]
                rows.append({"n": n, "tip": tip, "theta": report.diagnostics["theta"], "order": None})
        except SolidError as e:
            logger.error(f"Study {preset} failed: {e}")
            return {
                "error": str(e),
                "exit_code": e.exit_code,
                "rows": rows,
                "formatted_output": f"❌ {preset}: {e}"
            }

        sizes = [1.0 / row["n"] for row in rows]
        for row, order in zip(rows, observed_orders([row["tip"] for row in rows], sizes)):
            row["order"] = order

        directory = Path(output_dir or self.settings.output.directory)
        path = self.write_table(rows, directory / f"study_{preset}.csv")

        lines = [f"{'n':>5}  {'tip':>16}  {'theta':>10}  {'order':>6}"]
        for row in rows:
            order = "" if row["order"] is None else f"{row['order']:.2f}"
            lines.append(f"{row['n']:>5}  {row['tip']:>16.10g}  {row['theta']:>10.3e}  {order:>6}")
        lines.append(f"written: {path}")
        return {
            "preset": preset,
            "rows": rows,
            "csv": str(path),
            "exit_code": 0,
            "formatted_output": "\n".join(lines)
        }
