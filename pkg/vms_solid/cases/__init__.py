"""Cases package - Case files, benchmark presets and diagnostics."""

from vms_solid.cases.config import CaseConfig, Probe, parse_case, serialize_case
from vms_solid.cases.diagnostics import pressure_oscillation_indicator, von_mises
from vms_solid.cases.presets import preset, preset_names, resolve_case

__all__ = [
    "CaseConfig",
    "Probe",
    "parse_case",
    "serialize_case",
    "preset",
    "preset_names",
    "resolve_case",
    "von_mises",
    "pressure_oscillation_indicator",
]
