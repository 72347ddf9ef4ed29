"""Shared fixtures.

The 30-day reference run is expensive, so it is produced once per
session with full record collection and shared by the simulator,
collector, and acceptance tests. A 2-day variant with lossy ACKs
exercises the duplicate path cheaply.
"""

from __future__ import annotations

import contextlib
import io

import pytest

from loratherm.cli import main as cli_main
from loratherm.simcore.runner import SimulationResult, run_scenario
from loratherm.simcore.scenario import Scenario, default_scenario


@pytest.fixture(scope="session")
def ref_scenario() -> Scenario:
    return default_scenario()


@pytest.fixture(scope="session")
def ref_run(ref_scenario) -> SimulationResult:
    """Reference 30-day confirmed run with all record streams kept."""
    return run_scenario(
        ref_scenario,
        collect_measurements=True,
        collect_deliveries=True,
        collect_attempts=True,
    )


@pytest.fixture(scope="session")
def ref_stream(ref_run, tmp_path_factory):
    """The reference run's gateway stream on disk: (path, line count)."""
    path = tmp_path_factory.mktemp("refstream") / "gateway.log"
    count = ref_run.write_stream(str(path))
    return path, count


@pytest.fixture(scope="session")
def lossy_run() -> SimulationResult:
    """2-day run with 2% ACK loss: produces server-visible duplicates."""
    scenario = default_scenario(duration_s=2 * 86400.0, ack_loss_prob=0.02, seed=7)
    return run_scenario(
        scenario,
        collect_measurements=True,
        collect_deliveries=True,
        collect_attempts=True,
    )


@pytest.fixture(scope="session")
def lossy_stream(lossy_run, tmp_path_factory):
    path = tmp_path_factory.mktemp("lossystream") / "gateway.log"
    count = lossy_run.write_stream(str(path))
    return path, count


class CliResult:
    def __init__(self, code: int, out: str, err: str):
        self.code = code
        self.out = out
        self.err = err

    def kv(self) -> dict[str, str]:
        """Parse key=value lines from stdout."""
        pairs = {}
        for line in self.out.splitlines():
            if "=" in line and not line.startswith("#"):
                key, _, value = line.partition("=")
                if " " not in key:
                    pairs[key] = value
        return pairs


@pytest.fixture()
def cli():
    """Run the CLI in-process; returns CliResult(code, stdout, stderr)."""

    def run(*argv: str) -> CliResult:
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            try:
                code = cli_main(list(argv))
            except SystemExit as exc:  # argparse usage errors
                code = exc.code if isinstance(exc.code, int) else 2
        return CliResult(code, out.getvalue(), err.getvalue())

    return run
