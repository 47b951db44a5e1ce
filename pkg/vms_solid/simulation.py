"""
Simulation - Runs one case from configuration to output files.

The time loop:
1. Sample probes at t = 0 and write the initial VTK snapshot
2. advance_step until time.t_end (one step per time.dt)
3. Sample probes after every step, write VTK every output.vtk_every steps
4. Write the probe CSVs and a final snapshot, even when a step fails
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from vms_solid.cases.config import (
    CaseConfig,
    build_boundary_conditions,
    build_material,
    build_mesh,
    build_probes,
    build_solver_config,
    initial_velocity,
    step_count,
)
from vms_solid.cases.diagnostics import (
    divergence_ratio,
    nodal_von_mises,
    pressure_oscillation_indicator,
    total_mass,
    volumetric_pressure,
)
from vms_solid.errors import SolidError
from vms_solid.fem import validate_boundary_conditions
from vms_solid.io.probes import ProbeSampler
from vms_solid.io.vtk import VtkSnapshot, snapshot_path, write_vtk
from vms_solid.mesh import element_jacobians
from vms_solid.solver import advance_step
from vms_solid.timestepping import State

logger = logging.getLogger(__name__)


@dataclass
class RunReport:
    """Outcome of one case run."""
    case_name: str
    wall_time: float = 0.0
    steps_completed: int = 0
    steps_planned: int = 0
    newton_iterations: List[int] = field(default_factory=list)
    final_residuals: List[float] = field(default_factory=list)
    output_files: List[str] = field(default_factory=list)
    exit_status: int = 0
    error: Optional[str] = None
    probe_values: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.exit_status == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "case_name": self.case_name,
            "wall_time": self.wall_time,
            "steps_completed": self.steps_completed,
            "steps_planned": self.steps_planned,
            "newton_iterations": list(self.newton_iterations),
            "final_residuals": list(self.final_residuals),
            "output_files": list(self.output_files),
            "exit_status": self.exit_status,
            "error": self.error,
            "probe_values": dict(self.probe_values),
            "diagnostics": dict(self.diagnostics),
        }

    def summary_table(self) -> str:
        """Plain-text summary printed by the CLI."""
        status = "OK" if self.success else f"FAILED ({self.error})"
        total_newton = sum(self.newton_iterations)
        rows = [
            ("case", self.case_name),
            ("status", status),
            ("steps", f"{self.steps_completed}/{self.steps_planned}"),
            ("newton iterations", str(total_newton)),
            ("final residual", f"{self.final_residuals[-1]:.3e}" if self.final_residuals else "-"),
            ("wall time", f"{self.wall_time:.2f} s"),
        ]
        rows.extend((f"probe {name}", f"{value:.10g}") for name, value in self.probe_values.items())
        rows.extend((name, f"{value:.6g}") for name, value in self.diagnostics.items())
        rows.extend(("output", path) for path in self.output_files)
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)


class Simulation:
    """Mesh, material, loads and state of one case."""

    def __init__(
        self,
        config: CaseConfig,
        output_dir: Optional[Path] = None,
        base_dir: Optional[Path] = None,
        write_outputs: bool = True,
    ):
        """
        Build the discrete problem of a case.

        Args:
            config: Validated case
            output_dir: Directory for VTK and CSV files
            base_dir: Directory relative mesh paths are resolved against
            write_outputs: Write files (off for studies and tests)
        """
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else Path("results")
        self.write_outputs = write_outputs
        self.prefix = config.get("output.prefix") or config.name
        self.vtk_every = int(config.get("output.vtk_every", 0))

        self.mesh = build_mesh(config, base_dir)
        self.material = build_material(config)
        self.bcs = build_boundary_conditions(config, self.mesh)
        validate_boundary_conditions(self.mesh, self.bcs)
        self.solver_config = build_solver_config(config)
        self.sampler = ProbeSampler(self.mesh, self.material, build_probes(config))
        self.n_steps = step_count(config)

        velocity = initial_velocity(config, self.mesh.nodes_reference)
        self.state = State.initial(
            self.mesh.n_nodes,
            self.mesh.dim,
            density=np.full(self.mesh.n_elements, self.material.rho0),
            velocity=velocity,
            dt=self.solver_config.dt,
        )
        self.initial_mass = total_mass(self.mesh, self.state.density)
        logger.info(
            f"Case {config.name}: {self.mesh.n_nodes} nodes, {self.mesh.n_elements} elements, "
            f"{self.material.kind}, {self.solver_config.scheme}, {self.n_steps} steps"
        )

    def step(self) -> None:
        self.mesh, self.state = advance_step(self.mesh, self.material, self.state, self.solver_config, self.bcs)

    def snapshot(self) -> VtkSnapshot:
        cell_scalars = {}
        pressure = volumetric_pressure(self.mesh, self.material)
        if pressure is not None:
            cell_scalars["volumetric_pressure"] = pressure
        return VtkSnapshot(
            points=self.mesh.nodes_current,
            elements=self.mesh.elements,
            displacement=self.state.u,
            pressure=self.state.p,
            von_mises=nodal_von_mises(self.mesh, self.material, self.state.u),
            J=element_jacobians(self.mesh),
            density=self.state.density,
            time=self.state.t,
            title=self.config.name,
            cell_scalars=cell_scalars,
        )

    def diagnostics(self) -> Dict[str, float]:
        mass = total_mass(self.mesh, self.state.density)
        return {
            "theta": pressure_oscillation_indicator(self.mesh, self.state.p),
            "divergence_ratio": divergence_ratio(self.mesh, self.state.u),
            "mass_error": abs(mass - self.initial_mass) / self.initial_mass,
            "stretch_defect": self.state.stretch_defect,
        }

    def _write_snapshot(self, report: RunReport, suffix: Optional[str] = None) -> None:
        if not self.write_outputs:
            return
        path = snapshot_path(self.output_dir, self.prefix, self.state.step, suffix)
        report.output_files.append(str(write_vtk(self.snapshot(), path)))

    def run(self) -> RunReport:
        """
        Execute the full time loop.

        Solver failures do not raise: they end the loop and are recorded
        in the report (exit_status 1 for numerical, 2 for configuration
        errors). Files written so far are kept.
        """
        report = RunReport(case_name=self.config.name, steps_planned=self.n_steps)
        start = time.perf_counter()

        self.sampler.sample(self.state.t, self.mesh, self.state.u, self.state.p)
        self._write_snapshot(report)

        try:
            for _ in range(self.n_steps):
                self.step()
                report.steps_completed += 1
                report.newton_iterations.append(len(self.state.newton_trace) - 1)
                report.final_residuals.append(self.state.newton_trace[-1])
                report.probe_values = self.sampler.sample(self.state.t, self.mesh, self.state.u, self.state.p)
                if self.vtk_every > 0 and self.state.step % self.vtk_every == 0 and self.state.step < self.n_steps:
                    self._write_snapshot(report)
        except SolidError as e:
            logger.error(f"Case {self.config.name} failed at step {self.state.step + 1}: {e}")
            report.exit_status = e.exit_code
            report.error = str(e)

        self._write_snapshot(report, suffix="final")
        if self.write_outputs:
            report.output_files.extend(str(p) for p in self.sampler.write(self.output_dir, self.prefix))
        report.diagnostics = self.diagnostics()
        report.wall_time = time.perf_counter() - start
        logger.info(
            f"Case {self.config.name} finished: {report.steps_completed}/{self.n_steps} steps "
            f"in {report.wall_time:.2f} s"
        )
        return report

    def probe_series(self, name: str):
        return self.sampler.series[name]
