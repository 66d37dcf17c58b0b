"""
Tests for the command-line front end.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from brwtie_lab.cli import build_parser, main
from brwtie_lab.errors import EXIT_CONFIG_ERROR, EXIT_NUMERIC_FAILURE, ConvergenceError
from brwtie_lab.models import CheckResult
from brwtie_lab.reporting import read_csv

CONFIGS = Path(__file__).resolve().parents[2] / "configs"

FULL_TREE = """
schema_version = 1
seed = 5
[environment]
model = "gaussian_binary"
sigma = { kind = "constant", value = 1.0 }
[speed]
grid = 64
[simulate]
n = 6
trials = 3
mode = "full_tree"
"""


@pytest.fixture(autouse=True)
def no_dotenv(mocker):
    """Keep a developer .env out of the tests."""
    mocker.patch("brwtie_lab.cli.load_dotenv")


class TestParser:
    """Test argument parsing."""

    def test_subcommand_required(self):
        """Test that a subcommand must be given."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_common_flags(self):
        """Test that the shared flags reach every subcommand."""
        args = build_parser().parse_args(
            ["simulate", "--env", "x.toml", "--seed", "3", "--trials", "10"]
        )
        assert args.env == Path("x.toml")
        assert (args.seed, args.trials) == (3, 10)

    def test_psi_range(self):
        """Test the three-value range flag."""
        args = build_parser().parse_args(["psi", "--h-range", "0", "1", "5"])
        assert args.h_range == [0.0, 1.0, 5.0]


class TestPsiCommand:
    """Test the psi subcommand."""

    def test_values_written_and_printed(self, tmp_path, capsys):
        """Test psi.csv and the printed rows."""
        code = main(["psi", "--h", "0", "1", "--out", str(tmp_path)])

        assert code == 0
        table = read_csv(tmp_path / "psi.csv")
        assert table[0, 1] == pytest.approx(-(np.pi**2) / 2.0)
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("0,")

    def test_range(self, tmp_path):
        """Test an evenly spaced range of h."""
        assert main(["psi", "--h-range", "-1", "1", "3", "--out", str(tmp_path)]) == 0
        table = read_csv(tmp_path / "psi.csv")
        assert table[:, 0].tolist() == [-1.0, 0.0, 1.0]
        assert table[0, 1] - table[2, 1] == pytest.approx(1.0, abs=1e-8)


class TestPdeCommand:
    """Test the pde subcommand wiring."""

    def test_runs_each_h(self, tmp_path, mocker, capsys):
        """Test one solver run per h with the requested domain."""
        run = mocker.MagicMock(decay_rate=-1.5)
        solver = mocker.patch("brwtie_lab.cli.run_feynman_kac", return_value=run)
        writer = mocker.patch("brwtie_lab.cli.write_pde_run")

        code = main(
            ["pde", "--h", "1", "2", "--domain", "halfline", "--out", str(tmp_path)]
        )

        assert code == 0
        assert [c.args[:2] for c in solver.call_args_list] == [
            (1.0, "halfline"),
            (2.0, "halfline"),
        ]
        assert writer.call_count == 2
        report = json.loads(capsys.readouterr().out)
        assert [r["decay_rate"] for r in report["runs"]] == [-1.5, -1.5]


class TestSpeedCommand:
    """Test the speed subcommand."""

    def test_homogeneous_speed(self, tmp_path, capsys):
        """Test v* = 1 for the homogeneous unit environment."""
        code = main(
            [
                "speed",
                "--env",
                str(CONFIGS / "homogeneous_unit.toml"),
                "--grid",
                "64",
                "--out",
                str(tmp_path),
            ]
        )

        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["v_star"] == pytest.approx(1.0, abs=1e-6)
        assert report["kkt_passed"] is True
        lines = (tmp_path / "natural_speed.csv").read_text().splitlines()
        assert lines[0].startswith("# config_hash=")
        assert lines[1] == "# t,v,theta_bar"

    def test_needs_env(self, tmp_path):
        """Test that speed without --env is a configuration error."""
        assert main(["speed", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR

    def test_missing_config(self, tmp_path):
        """Test that a missing config file exits with status 2."""
        code = main(["speed", "--env", str(tmp_path / "absent.toml")])
        assert code == EXIT_CONFIG_ERROR

    def test_undecodable_config(self, tmp_path):
        """Test that a non-UTF-8 config exits with status 2."""
        config = tmp_path / "bad.toml"
        config.write_bytes(b"schema_version = 1\n\xff\xfe\n")
        assert main(["speed", "--env", str(config)]) == EXIT_CONFIG_ERROR

    def test_convergence_failure(self, tmp_path, mocker):
        """Test that solver failures exit 1 and leave their residuals."""
        mocker.patch(
            "brwtie_lab.cli.solve_optimal_profile",
            side_effect=ConvergenceError("no fixed point", residuals={"kkt": 0.5}),
        )
        code = main(
            [
                "speed",
                "--env",
                str(CONFIGS / "homogeneous_unit.toml"),
                "--out",
                str(tmp_path),
            ]
        )

        assert code == EXIT_NUMERIC_FAILURE
        residuals = json.loads((tmp_path / "optimal_path_residuals.json").read_text())
        assert residuals["residuals"] == {"kkt": 0.5}


class TestSimulateCommand:
    """Test the simulate subcommand."""

    def test_full_tree_run(self, tmp_path, capsys):
        """Test a small seeded run and its output files."""
        config = tmp_path / "tree.toml"
        config.write_text(FULL_TREE)

        code = main(["simulate", "--env", str(config), "--out", str(tmp_path)])

        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["completed"] == 3
        assert report["survival_rate"] == 1.0
        assert read_csv(tmp_path / "brw_trials.csv").shape == (3, 6)
        assert (tmp_path / "brw_summary.json").is_file()

    def test_seed_required(self, tmp_path):
        """Test that an unseeded simulation is refused."""
        config = tmp_path / "unseeded.toml"
        config.write_text(FULL_TREE.replace("seed = 5\n", ""))
        assert main(["simulate", "--env", str(config)]) == EXIT_CONFIG_ERROR

    def test_seed_flag(self, tmp_path):
        """Test that --seed supplies a missing seed."""
        config = tmp_path / "unseeded.toml"
        config.write_text(FULL_TREE.replace("seed = 5\n", ""))
        code = main(
            ["simulate", "--env", str(config), "--seed", "9", "--out", str(tmp_path)]
        )
        assert code == 0
        summary = json.loads((tmp_path / "brw_summary.json").read_text())
        assert summary["seed"] == 9


class TestVerifyCommand:
    """Test the verify subcommand."""

    def test_failure_exit_code(self, tmp_path, mocker, capsys):
        """Test that a failed check exits 1 and is reported."""
        mocker.patch(
            "brwtie_lab.cli.run_checks",
            return_value=[
                CheckResult(name="psi_at_zero", passed=True),
                CheckResult(name="l_star", passed=False, detail="off"),
            ],
        )

        code = main(["verify", "--out", str(tmp_path)])

        assert code == 1
        report = json.loads(capsys.readouterr().out)
        assert report["failed"] == ["l_star"]
        document = json.loads((tmp_path / "verify.json").read_text())
        assert document["profile"] == "quick"
        assert len(document["checks"]) == 2

    def test_profile_flag(self, tmp_path, mocker):
        """Test that --profile selects the suite."""
        runner = mocker.patch("brwtie_lab.cli.run_checks", return_value=[])
        assert main(["verify", "--profile", "full", "--out", str(tmp_path)]) == 0
        runner.assert_called_once_with("full", 0)


@pytest.mark.slow
class TestConstantsCommand:
    """Test the constants subcommand end to end."""

    def test_homogeneous_constants(self, tmp_path, capsys):
        """Test lambda* against its homogeneous closed form."""
        code = main(
            [
                "constants",
                "--env",
                str(CONFIGS / "homogeneous_unit.toml"),
                "--grid",
                "256",
                "--out",
                str(tmp_path),
            ]
        )

        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["l_star"] == pytest.approx(0.0, abs=1e-9)
        assert report["lambda_star"] == pytest.approx(
            report["lambda_star_closed_form"], rel=1e-4
        )
        assert (tmp_path / "constants.json").is_file()
