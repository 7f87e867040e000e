"""Delayed regulated synchronization of discrete-time multi-agent systems
over directed spanning trees with non-uniform communication delays."""

__version__ = "0.1.0"

from .delayline import DelayLine
from .engine import (
    GainSpec,
    Scenario,
    SimResult,
    certificate_matrix,
    certificate_sweep,
    delayed_sync_errors,
    prepare,
    run,
)
from .errors import (
    CertificateError,
    DelaySyncError,
    DimensionError,
    DivergenceError,
    HomogenizationError,
    ModelError,
    ScenarioError,
    SynthesisError,
    TopologyError,
    WiringError,
)
from .plant import AgentModel, Exosystem, PreCompensator, TargetModel, homogenize, remodel_exosystem
from .protocol import FULL_STATE, HETEROGENEOUS, PARTIAL_STATE, ProtocolState
from .scenario_io import dump_scenario, load_scenario, load_shipped, parse_scenario, shipped_scenarios
from .topology import DerivedNetwork, NetworkTopology, derive

__all__ = [
    "AgentModel",
    "CertificateError",
    "DelayLine",
    "DelaySyncError",
    "DerivedNetwork",
    "DimensionError",
    "DivergenceError",
    "Exosystem",
    "FULL_STATE",
    "GainSpec",
    "HETEROGENEOUS",
    "HomogenizationError",
    "ModelError",
    "NetworkTopology",
    "PARTIAL_STATE",
    "PreCompensator",
    "ProtocolState",
    "Scenario",
    "ScenarioError",
    "SimResult",
    "SynthesisError",
    "TargetModel",
    "TopologyError",
    "WiringError",
    "certificate_matrix",
    "certificate_sweep",
    "delayed_sync_errors",
    "derive",
    "dump_scenario",
    "homogenize",
    "load_scenario",
    "load_shipped",
    "parse_scenario",
    "prepare",
    "remodel_exosystem",
    "run",
    "shipped_scenarios",
]
