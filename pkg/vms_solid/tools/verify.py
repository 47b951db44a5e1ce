"""
Verify Tool - Run the method checks and print a PASS/FAIL table.
"""

import logging
from typing import Any, Dict

from vms_solid.errors import SolidError
from vms_solid.verification import run_verification

logger = logging.getLogger(__name__)


class VerifyTool:
    """Tool for the verification suite."""

    description = "Run patch, tangent, time-order, tau and checkerboard checks"

    parameters = {
        "quick": {
            "type": "boolean",
            "description": "Skip the checkerboard and manufactured-solution studies"
        }
    }

    required_params = []

    def execute(self, quick: bool = False) -> Dict[str, Any]:
        """
        Execute the verification suite.

        Returns:
            Dict with one entry per check; exit code 1 when any check fails
        """
        try:
            results = run_verification(quick=quick)
        except SolidError as e:
            logger.exception(f"Verification aborted: {e}")
            return {"error": str(e), "exit_code": e.exit_code, "formatted_output": f"❌ verification aborted: {e}"}

        failed = [r.name for r in results if not r.passed]
        lines = [r.row() for r in results]
        lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
        return {
            "checks": [{"name": r.name, "passed": r.passed, "value": r.value, "threshold": r.threshold} for r in results],
            "failed": failed,
            "exit_code": 1 if failed else 0,
            "formatted_output": "\n".join(lines)
        }
