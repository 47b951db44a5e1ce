"""
Tests for the command-line tools.
"""

import csv

import pytest


NONLINEAR_CASE = """\
case.name = "stiff_start"
geometry.kind = "box"
geometry.extents = (1.0, 1.0)
mesh.subdivisions = (4, 4)
material.kind = "neo_hookean"
material.E = 100.0
material.nu = 0.45
material.rho0 = 1.0
time.scheme = "static"
time.dt = 1.0
time.t_end = 1.0
newton.max_iter = 1
bc.wall.kind = "dirichlet"
bc.wall.tag = "xmin"
bc.wall.value = (0.0, 0.0)
bc.pull.kind = "traction"
bc.pull.tag = "xmax"
bc.pull.value = (0.0, 10.0)
"""


class TestTools:
    """Test the tool registry and tool metadata."""

    def test_registry(self):
        """Test that every subcommand has a tool."""
        from vms_solid.cli import TOOLS

        assert set(TOOLS) == {"run", "study", "presets", "verify"}
        for tool in TOOLS.values():
            assert tool.description
            assert isinstance(tool.parameters, dict)
            assert set(tool.required_params) <= set(tool.parameters)

    def test_presets_listing(self):
        """Test the preset summary lines."""
        from vms_solid.tools import PresetsTool

        result = PresetsTool().execute()

        assert result["exit_code"] == 0
        assert len(result["presets"]) == 7
        assert "cook_static" in result["formatted_output"]
        assert "linear_elastic E=250" in result["formatted_output"]

    def test_preset_text(self):
        """Test printing one preset as a case file."""
        from vms_solid.tools import PresetsTool

        result = PresetsTool().execute(name="csm1")

        assert 'material.kind = "svk"' in result["case_text"]
        assert "bc.gravity.value = (0.0, -2.0)" in result["case_text"]

    def test_unknown_preset(self):
        """Test the error result of an unknown preset."""
        from vms_solid.tools import PresetsTool

        result = PresetsTool().execute(name="nope")

        assert result["exit_code"] == 2
        assert result["formatted_output"].startswith("❌")

    def test_run_static(self, tmp_path):
        """Test a coarse Cook membrane run and its files."""
        from vms_solid.tools import RunTool

        result = RunTool().execute("cook_static", ["mesh.n=2"], output_dir=str(tmp_path))
        report = result["report"]

        assert result["exit_code"] == 0
        assert report["steps_completed"] == 1
        assert report["probe_values"]["tip_a"] > 0.0
        assert (tmp_path / "cook_static_00000.vtk").exists()
        assert (tmp_path / "cook_static_final.vtk").exists()
        lines = (tmp_path / "cook_static_tip_a.csv").read_text().splitlines()
        assert lines[0] == "t,u_y@(48,60)"
        assert len(lines) == 3

    def test_run_without_outputs(self, tmp_path):
        """Test that --no-output writes nothing."""
        from vms_solid.tools import RunTool

        result = RunTool().execute("cook_static", ["mesh.n=2"], output_dir=str(tmp_path), write_outputs=False)

        assert result["exit_code"] == 0
        assert result["report"]["output_files"] == []
        assert list(tmp_path.iterdir()) == []

    def test_vtk_every(self, tmp_path):
        """Test periodic snapshots of a transient run."""
        from vms_solid.tools import RunTool

        overrides = ["mesh.n=2", "time.t_end=0.05", "output.vtk_every=2"]
        result = RunTool().execute("cook_transient", overrides, output_dir=str(tmp_path))

        assert result["exit_code"] == 0
        names = sorted(p.name for p in tmp_path.glob("*.vtk"))
        assert names == [
            "cook_transient_00000.vtk",
            "cook_transient_00002.vtk",
            "cook_transient_00004.vtk",
            "cook_transient_final.vtk",
        ]

    def test_run_convergence_failure(self, tmp_path):
        """Test that a Newton failure is reported with exit code 1 and keeps the files."""
        from vms_solid.tools import RunTool

        case = tmp_path / "stiff.case"
        case.write_text(NONLINEAR_CASE)
        result = RunTool().execute(str(case), output_dir=str(tmp_path / "out"))

        assert result["exit_code"] == 1
        assert result["report"]["steps_completed"] == 0
        assert "Newton did not converge" in result["report"]["error"]
        assert (tmp_path / "out" / "stiff_start_final.vtk").exists()

    def test_study(self, tmp_path):
        """Test a three-density study and its table."""
        from vms_solid.tools import StudyTool

        result = StudyTool().execute("cook_static", [8, 2, 4, 4], output_dir=str(tmp_path))

        assert result["exit_code"] == 0
        assert [row["n"] for row in result["rows"]] == [2, 4, 8]
        assert result["rows"][0]["order"] is None
        with open(tmp_path / "study_cook_static.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["n", "tip", "theta", "order"]
        assert rows[1][3] == ""
        assert len(rows) == 4

    def test_study_invalid_densities(self):
        """Test empty and non-positive density lists."""
        from vms_solid.tools import StudyTool

        assert StudyTool().execute("cook_static", [])["exit_code"] == 2
        assert StudyTool().execute("cook_static", [0, 4])["exit_code"] == 2


class TestMain:
    """Test the argument parser and exit codes."""

    def test_parser(self):
        """Test argument parsing of run and study."""
        from vms_solid.cli import build_parser, tool_arguments

        args = build_parser().parse_args(["run", "cook_static", "--set", "mesh.n=4", "--set", "material.nu=0.3"])
        assert tool_arguments(args) == {
            "case": "cook_static",
            "overrides": ["mesh.n=4", "material.nu=0.3"],
            "output_dir": None,
            "write_outputs": True,
        }

        args = build_parser().parse_args(["study", "cook_static"])
        assert args.densities == [4, 8, 16, 32]

    def test_presets_exit_code(self, capsys):
        """Test that listing presets succeeds."""
        from vms_solid.cli import main

        assert main(["presets", "--quiet"]) == 0
        assert "bending_beam_3d" in capsys.readouterr().out

    def test_configuration_error(self, capsys, tmp_path):
        """Test exit code 2 for an out-of-range override."""
        from vms_solid.cli import main

        code = main(["run", "cook_static", "--quiet", "--set", "material.nu=0.6", "--out", str(tmp_path)])

        assert code == 2
        assert "❌" in capsys.readouterr().err

    def test_missing_case(self, tmp_path):
        """Test exit code 2 for an unknown case."""
        from vms_solid.cli import main

        assert main(["run", str(tmp_path / "missing.case"), "--quiet"]) == 2

    def test_usage_error(self):
        """Test that argparse errors exit with status 2."""
        from vms_solid.cli import main

        with pytest.raises(SystemExit) as info:
            main(["simulate"])
        assert info.value.code == 2
