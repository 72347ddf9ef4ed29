"""The two event engines must be interchangeable bit for bit."""

import numpy as np
import pytest

from loratherm.errors import ConfigError
from loratherm.simcore import available_engines, get_engine, run_scenario, scenario_from_dict
from loratherm.simcore.backend import ENGINE_ENV_VAR
from loratherm.simcore.data import EngineOutputs

HAVE_COMPILED = "compiled" in available_engines()
needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled engine not built")

SCENARIOS = {
    "default-short": {"duration_s": 7200.0, "seed": 1},
    "ack-loss": {"duration_s": 7200.0, "seed": 7, "ack_loss_prob": 0.05},
    "reboots": {
        "duration_s": 7200.0,
        "seed": 3,
        "n_nodes": 4,
        "reboots": [{"node": 0, "time_s": 2500.0}, {"node": 2, "time_s": 5000.0}],
    },
    "mixed-radio": {
        "duration_s": 7200.0,
        "seed": 5,
        "channels": 2,
        "nodes": [
            {"sf": 7},
            {"sf": 7, "distance_m": 10.0},
            {"sf": 9, "period_s": 60},
            {"sf": 12, "period_s": 300},
            {"sf": 7, "confirmed": False},
            {"sf": 7, "distance_m": 100000.0},
        ],
    },
    "duty-bound": {
        "duration_s": 7200.0,
        "seed": 9,
        "n_nodes": 2,
        "node_defaults": {"sf": 12},
    },
}


def outputs_equal(a: EngineOutputs, b: EngineOutputs) -> list[str]:
    """Names of fields that differ between two engine outputs."""
    diffs = []
    for name in vars(a):
        va, vb = getattr(a, name), getattr(b, name)
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            if va is None or vb is None or va.dtype != vb.dtype or not np.array_equal(va, vb):
                diffs.append(name)
        elif va != vb:
            diffs.append(name)
    return diffs


@needs_compiled
@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_engines_agree_exactly(name):
    sc = scenario_from_dict(SCENARIOS[name])
    results = {
        backend: run_scenario(
            sc,
            backend=backend,
            collect_measurements=True,
            collect_deliveries=True,
            collect_attempts=True,
        )
        for backend in ("python", "compiled")
    }
    a, b = results["python"].outputs, results["compiled"].outputs
    assert outputs_equal(a, b) == []
    sa, sb = results["python"].stats, results["compiled"].stats
    assert sa.backend == "python" and sb.backend == "compiled"
    # Whole summaries match except for the backend label itself.
    da, db = sa.to_dict(), sb.to_dict()
    da.pop("backend"), db.pop("backend")
    assert da == db


@needs_compiled
def test_gateway_streams_identical(tmp_path):
    sc = scenario_from_dict({"duration_s": 3600.0, "seed": 2})
    lines = {}
    for backend in ("python", "compiled"):
        result = run_scenario(
            sc, backend=backend, collect_measurements=True, collect_deliveries=True
        )
        lines[backend] = list(result.iter_gateway_lines())
    assert lines["python"] == lines["compiled"]


class TestSelection:
    def test_python_always_available(self):
        assert "python" in available_engines()
        assert get_engine("python") is available_engines()["python"]

    def test_auto_prefers_compiled_when_built(self):
        engine = get_engine("auto")
        if HAVE_COMPILED:
            assert engine is available_engines()["compiled"]
        else:
            assert engine is available_engines()["python"]

    def test_env_var_selects_engine(self, monkeypatch):
        monkeypatch.setenv(ENGINE_ENV_VAR, "python")
        assert get_engine() is available_engines()["python"]
        monkeypatch.delenv(ENGINE_ENV_VAR)
        assert get_engine() is get_engine("auto")

    def test_explicit_name_beats_env_var(self, monkeypatch):
        monkeypatch.setenv(ENGINE_ENV_VAR, "nonsense")
        assert get_engine("python") is available_engines()["python"]

    def test_unknown_engine_rejected(self):
        with pytest.raises(ConfigError):
            get_engine("fortran")
