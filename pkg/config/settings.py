"""
Settings - Central configuration loader.

Loads configuration from:
1. Environment variables (.env file)
2. YAML config files (presets.yml)
3. Default values

Usage:
    from config.settings import get_settings

    settings = get_settings()
    print(settings.solver.newton_tol)
    print(settings.get_preset("cook_static"))
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv


# Load .env file
load_dotenv()


@dataclass
class SolverSettings:
    """Default Newton and linear-solver controls."""
    newton_tol: float = 1e-8
    newton_max_iter: int = 25
    linear_solver: str = "direct"
    linear_tol: float = 1e-10
    linear_max_iter: int = 200
    linear_restart: int = 50

    @classmethod
    def from_env(cls) -> "SolverSettings":
        """Load from environment variables."""
        return cls(
            newton_tol=float(os.getenv("VMS_NEWTON_TOL", "1e-8")),
            newton_max_iter=int(os.getenv("VMS_NEWTON_MAX_ITER", "25")),
            linear_solver=os.getenv("VMS_LINEAR_SOLVER", "direct"),
            linear_tol=float(os.getenv("VMS_LINEAR_TOL", "1e-10")),
            linear_max_iter=int(os.getenv("VMS_LINEAR_MAX_ITER", "200")),
            linear_restart=int(os.getenv("VMS_LINEAR_RESTART", "50")),
        )


@dataclass
class OutputSettings:
    """Where and how often results are written."""
    directory: str = "results"
    vtk_every: int = 0

    @classmethod
    def from_env(cls) -> "OutputSettings":
        """Load from environment variables."""
        return cls(
            directory=os.getenv("VMS_OUTPUT_DIR", "results"),
            vtk_every=int(os.getenv("VMS_VTK_EVERY", "0")),
        )


@dataclass
class RuntimeSettings:
    """Process-level options."""
    log_level: str = "INFO"
    quiet: bool = False

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        """Load from environment variables."""
        return cls(
            log_level=os.getenv("LOG_LEVEL", "INFO"),
            quiet=os.getenv("VMS_QUIET", "false").lower() == "true",
        )


class Settings:
    """Central settings manager."""

    def __init__(self, config_dir: Optional[Path] = None):
        """
        Initialize settings.

        Args:
            config_dir: Path to config directory (defaults to ./config)
        """
        self.config_dir = config_dir or Path(__file__).parent

        # Load environment settings
        self.solver = SolverSettings.from_env()
        self.output = OutputSettings.from_env()
        self.runtime = RuntimeSettings.from_env()

        # Load YAML configs
        self._presets: Dict[str, Any] = {}

        self._load_yaml_configs()

    def _load_yaml_configs(self) -> None:
        """Load YAML configuration files."""
        presets_file = self.config_dir / "presets.yml"
        if presets_file.exists():
            with open(presets_file) as f:
                self._presets = yaml.safe_load(f) or {}

    # Preset methods
    def preset_names(self) -> List[str]:
        """Names of the benchmark presets, in file order."""
        return list(self._presets.get("presets", {}).keys())

    def get_preset(self, name: str) -> Optional[Dict[str, Any]]:
        """Nested preset definition by name."""
        return self._presets.get("presets", {}).get(name)

    def case_defaults(self) -> Dict[str, Any]:
        """Flat case keys filled in from settings when a case leaves them out."""
        return {
            "newton.tol": self.solver.newton_tol,
            "newton.max_iter": self.solver.newton_max_iter,
            "linear.kind": self.solver.linear_solver,
            "linear.tol": self.solver.linear_tol,
            "linear.max_iter": self.solver.linear_max_iter,
            "linear.restart": self.solver.linear_restart,
            "output.vtk_every": self.output.vtk_every,
        }


# Singleton instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get the settings singleton."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings
