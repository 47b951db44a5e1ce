"""
Presets Tool - List the benchmark presets or print one as a case file.
"""

import logging
from typing import Any, Dict, Optional

from vms_solid.cases.config import serialize_case
from vms_solid.cases.presets import preset, preset_names, preset_summary
from vms_solid.errors import SolidError

logger = logging.getLogger(__name__)


class PresetsTool:
    """Tool for inspecting presets."""

    description = "List benchmark presets, or show one preset as case-file text"

    parameters = {
        "name": {
            "type": "string",
            "description": "Preset to print as a case file (optional)"
        }
    }

    required_params = []

    def execute(self, name: Optional[str] = None) -> Dict[str, Any]:
        """
        Execute the presets tool.

        Args:
            name: Preset to show in full; all presets are listed when omitted

        Returns:
            Dict with preset info and formatted output
        """
        try:
            if name:
                text = serialize_case(preset(name))
                return {"preset": name, "case_text": text, "exit_code": 0, "formatted_output": text.rstrip()}

            summaries = [preset_summary(n) for n in preset_names()]
        except SolidError as e:
            logger.error(f"Preset lookup failed: {e}")
            return {"error": str(e), "exit_code": e.exit_code, "formatted_output": f"❌ {e}"}

        width = max(len(s["name"]) for s in summaries)
        lines = [f"{s['name'].ljust(width)}  {s['mesh']}; {s['material']}; {s['time']}" for s in summaries]
        return {"presets": summaries, "exit_code": 0, "formatted_output": "\n".join(lines)}
