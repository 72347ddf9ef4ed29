"""Discrete-event network simulator: scenarios, engines, statistics."""

from .arbitrate import (
    Outcome,
    TransmissionAttempt,
    analytic_conflict_ratio,
    arbitrate,
)
from .backend import available_engines, get_engine
from .runner import NodeStats, ScenarioStats, SimulationResult, run_scenario
from .scenario import (
    Scenario,
    SensorModel,
    default_scenario,
    load_scenario,
    scenario_from_dict,
)

__all__ = [
    "Outcome",
    "TransmissionAttempt",
    "analytic_conflict_ratio",
    "arbitrate",
    "available_engines",
    "get_engine",
    "NodeStats",
    "ScenarioStats",
    "SimulationResult",
    "run_scenario",
    "Scenario",
    "SensorModel",
    "default_scenario",
    "load_scenario",
    "scenario_from_dict",
]
