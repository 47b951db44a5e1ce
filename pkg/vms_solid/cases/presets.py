"""
Presets - Benchmark cases declared in config/presets.yml, and case lookup
by preset name or file path.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from config.settings import get_settings
from vms_solid.cases.config import CaseConfig, apply_overrides, flatten_case, parse_case, validate_case
from vms_solid.errors import CaseConfigError, UnknownPresetError

logger = logging.getLogger(__name__)


def preset_names() -> List[str]:
    return get_settings().preset_names()


def preset(name: str) -> CaseConfig:
    """
    Fully populated benchmark case.

    Args:
        name: cook_static, cook_transient, upsetting, csm1, csm2, csm3 or bending_beam_3d

    Returns:
        Validated CaseConfig

    Raises:
        UnknownPresetError: if no preset has that name
    """
    definition = get_settings().get_preset(name)
    if definition is None:
        raise UnknownPresetError(f"unknown preset: {name} (available: {', '.join(preset_names())})")
    config = CaseConfig(values={"case.name": name, **flatten_case(definition)})
    validate_case(config)
    return config


def preset_summary(name: str) -> Dict[str, str]:
    """One-line description used by the presets listing."""
    config = preset(name)
    geometry = config.get("geometry.kind")
    if geometry == "cook":
        mesh = f"cook n={config.get('mesh.n', 16)} scale={config.get('geometry.scale', 1.0):g}"
    else:
        extents = "x".join(f"{e:g}" for e in config.get("geometry.extents", ()))
        cells = "x".join(str(s) for s in config.get("mesh.subdivisions", ()))
        mesh = f"{geometry} {extents} ({cells})"
    return {
        "name": name,
        "mesh": mesh,
        "material": f"{config.get('material.kind')} E={config.get('material.E'):g} nu={config.get('material.nu'):g}",
        "time": f"{config.get('time.scheme')} dt={config.get('time.dt'):g} t_end={config.get('time.t_end'):g}",
    }


def resolve_case(source: str, overrides: Sequence[str] = ()) -> Tuple[CaseConfig, Optional[Path]]:
    """
    Case from a preset name or a case file, with settings defaults underneath
    and ``--set`` overrides on top.

    Args:
        source: Preset name or path to a case file
        overrides: ``section.key=value`` strings

    Returns:
        (validated CaseConfig, directory relative mesh paths resolve against)

    Raises:
        CaseConfigError: unreadable or invalid case
    """
    defaults = CaseConfig(values=get_settings().case_defaults())
    if source in preset_names():
        config, base_dir = preset(source).with_defaults(defaults.values), None
    else:
        path = Path(source)
        if not path.is_file():
            raise CaseConfigError(f"no preset or case file named {source}")
        logger.info(f"Reading case file {path}")
        config, base_dir = parse_case(path.read_text(), base=defaults), path.parent
    if overrides:
        config = apply_overrides(config, overrides)
    return config, base_dir
