"""Analytical model and Monte-Carlo simulation of slotted CSMA broadcast
in linear networks with hidden stations."""

__version__ = "0.1.0"

from .config import ProtocolConfig, QueuePolicy, TrafficConfig
from .scenario import (
    ScenarioSnapshot,
    build_loop_topology,
    load_position_snapshot,
    save_position_snapshot,
    synthesize_multilane_snapshot,
)
from .oracle import ChannelQuantities, OracleParams, QuantitiesProvider, build_provider, run_oracle
from .model import ModelSolution, eta_cam, solve, solve_cam, solve_nonsaturated, solve_saturated
from .cam import CamPerformance, cam_report
from .simulate import SimStats, run_protocol_sim

__all__ = [
    "ProtocolConfig", "QueuePolicy", "TrafficConfig",
    "ScenarioSnapshot", "build_loop_topology", "load_position_snapshot",
    "save_position_snapshot", "synthesize_multilane_snapshot",
    "ChannelQuantities", "OracleParams", "QuantitiesProvider", "build_provider", "run_oracle",
    "ModelSolution", "eta_cam", "solve", "solve_cam", "solve_nonsaturated", "solve_saturated",
    "CamPerformance", "cam_report",
    "SimStats", "run_protocol_sim",
    "__version__",
]
