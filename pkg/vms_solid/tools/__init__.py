"""Tools package - one tool per command-line subcommand."""

from vms_solid.tools.presets import PresetsTool
from vms_solid.tools.run import RunTool
from vms_solid.tools.study import StudyTool
from vms_solid.tools.verify import VerifyTool

__all__ = ["PresetsTool", "RunTool", "StudyTool", "VerifyTool"]
