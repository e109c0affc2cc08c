"""Test the command-line interface of eh-bounds.

Most of these tests run the checkout's runner script in a subprocess and look
at what a user sees: the output rows, the messages and the exit code. Failure
paths that need a patched kernel call the CLI entry point in-process.
"""

import csv
import io
import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import pytest

from eh_bounds import montecarlo
from eh_bounds.__main__ import execute
from eh_bounds.errors import ConsistencyError

REPO_ROOT = Path(__file__).parent.parent.absolute()


@dataclass
class CLITestCase:
    """Test case for CLI interface behavior tests."""

    name: str
    args: list
    expected_in_output: list
    expected_not_in_output: Optional[list] = None
    expected_returncode: int = 0
    check_stderr: bool = False


def run_cli_command(args, cwd=None):
    """Run the CLI command with the given arguments."""
    if cwd is None:
        cwd = REPO_ROOT

    cmd = [sys.executable, str(REPO_ROOT / "run_bounds.py")] + args
    return subprocess.run(
        cmd,
        cwd=str(cwd),
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        check=False,
    )


def parse_rows(stdout: str) -> List[dict]:
    """Rows of a CSV result, skipping the config comment line."""
    lines = [line for line in stdout.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


@pytest.mark.parametrize(
    "case",
    [
        CLITestCase(
            name="help lists the commands",
            args=["--help"],
            expected_in_output=["bounds", "second-order", "design", "linear-capacity", "outage-sim", "selftest"],
        ),
        CLITestCase(
            name="version flag shows version",
            args=["--version"],
            expected_in_output=["EH Bounds v"],
        ),
        CLITestCase(
            name="command help lists columns",
            args=["outage-sim", "--help"],
            expected_in_output=["chernoff_bound", "--workers", "--set"],
        ),
        CLITestCase(
            name="eps outside the unit interval",
            args=["bounds", "--set", "eps=1.5"],
            expected_in_output=["error", "eps"],
            expected_returncode=2,
            check_stderr=True,
        ),
        CLITestCase(
            name="unknown energy family",
            args=["bounds", "--set", "model.family=pareto"],
            expected_in_output=["unknown energy family"],
            expected_returncode=2,
            check_stderr=True,
        ),
        CLITestCase(
            name="unknown config key",
            args=["design", "--set", "blocklength=10"],
            expected_in_output=["blocklength"],
            expected_returncode=2,
            check_stderr=True,
        ),
        CLITestCase(
            name="unwritable output path",
            args=["bounds", "--out", str(REPO_ROOT / "no-such-dir" / "out.csv")],
            expected_in_output=["error"],
            expected_returncode=2,
            check_stderr=True,
        ),
        CLITestCase(
            name="threshold mode needs a continuous model",
            args=["linear-capacity", "--set", "model.family=two-point", "--set", 'model.params={"e0":0,"e1":2,"p0":0.5}'],
            expected_in_output=["error"],
            expected_returncode=2,
            check_stderr=True,
        ),
    ],
    ids=lambda c: c.name,
)
def test_cli_behavior(case):
    """Test CLI behaviors using table-driven testing approach."""
    # Act
    result = run_cli_command(case.args)

    # Assert
    output = result.stderr if case.check_stderr else result.stdout
    output = output.lower()

    for expected in case.expected_in_output:
        assert expected.lower() in output, f"Expected '{expected}' in output. Output: {output}"

    if case.expected_not_in_output:
        for not_expected in case.expected_not_in_output:
            assert not_expected.lower() not in output, f"Did not expect '{not_expected}' in output"

    assert result.returncode == case.expected_returncode, (
        f"Expected return code {case.expected_returncode}, got {result.returncode}. Stderr: {result.stderr}"
    )


def test_bounds_at_reference_point():
    """Deterministic P=1, n=10000, eps=0.5 gives the reference bounds."""
    # Act
    result = run_cli_command(["bounds", "--set", "n=10000", "--set", "eps=0.5", "--set", "L=1"])

    # Assert
    assert result.returncode == 0, result.stderr
    assert result.stdout.startswith("# config=")
    (row,) = parse_rows(result.stdout)
    assert abs(float(row["achievable_log_M"]) - 4603.2) < 0.1
    assert abs(float(row["converse_log_M"]) - 5077.35) < 0.1
    assert row["achievable_feasible"] == "true"


def test_linear_capacity_closed_form():
    # Act
    result = run_cli_command(
        [
            "linear-capacity",
            "--set", "model.family=exponential",
            "--set", "lambda=1",
            "--set", "eps=0.6321205588285577",
        ]
    )

    # Assert
    assert result.returncode == 0, result.stderr
    (row,) = parse_rows(result.stdout)
    assert row["mode"] == "threshold"
    assert abs(float(row["rate"]) - 0.5) < 1e-6


def test_grid_rows_follow_config_order(tmp_path):
    # Arrange
    config = tmp_path / "design.json"
    config.write_text(json.dumps({"command": "design", "n": [1000, 10000], "eps": [0.1, 0.3], "eps1": 0.05}))

    # Act
    result = run_cli_command(["run", "--config", str(config)])

    # Assert
    assert result.returncode == 0, result.stderr
    rows = parse_rows(result.stdout)
    assert [(int(r["n"]), float(r["eps"])) for r in rows] == [(1000, 0.1), (1000, 0.3), (10000, 0.1), (10000, 0.3)]


def test_json_output_to_file(tmp_path):
    # Arrange
    out = tmp_path / "second.json"

    # Act
    result = run_cli_command(
        ["second-order", "--set", "eps=[0.1,0.2]", "--format", "json", "--out", str(out)]
    )

    # Assert
    assert result.returncode == 0, result.stderr
    assert result.stdout == ""
    document = json.loads(out.read_text())
    assert document["config"]["command"] == "second-order"
    assert "workers" not in document["config"]
    assert len(document["rows"]) == 2
    for row in document["rows"]:
        assert row["v_minus_minus"] <= row["v_minus"] <= row["v_plus"]


def test_outage_sim_small_run():
    # Act
    result = run_cli_command(
        ["outage-sim", "--set", "n=200", "--set", "L=4", "--set", "eps1=0.1", "--set", "trials=2000", "--seed", "9"]
    )

    # Assert
    assert result.returncode == 0, result.stderr
    (row,) = parse_rows(result.stdout)
    assert row["seed"] == "9"
    assert row["trials"] == "2000"
    assert float(row["estimate"]) <= 0.1 + 3.0 * float(row["stderr"])


def _broken_outage_kernel(rng, size, **kwargs):
    raise ConsistencyError("outage counter out of range")


def test_consistency_failure_exits_with_code_3(monkeypatch, capsys):
    """A consistency failure inside a simulation chunk maps to exit code 3."""
    # Arrange
    monkeypatch.setattr(montecarlo, "_outage_kernel", _broken_outage_kernel)

    # Act
    with pytest.raises(SystemExit) as exit_info:
        execute("outage-sim", None, ["n=200", "L=4", "eps1=0.1", "trials=3000"], 9, 4, None, None)

    # Assert
    assert exit_info.value.code == 3
    stderr = capsys.readouterr().err
    assert "consistency check failed" in stderr
    assert "outage counter out of range" in stderr


def test_selftest_failure_exits_with_code_3(monkeypatch, capsys):
    # Arrange
    monkeypatch.setattr(montecarlo, "_outage_kernel", _broken_outage_kernel)

    # Act
    with pytest.raises(SystemExit) as exit_info:
        execute("selftest", None, [], None, 2, None, None)

    # Assert
    assert exit_info.value.code == 3
    captured = capsys.readouterr()
    assert "self-test failed: outage_events" in captured.err
    assert "outage counter out of range" in captured.out
