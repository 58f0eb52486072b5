"""Simulator and verification workbench for adversarial packet routing
with delayed stall feedback and permanent link failures."""

from .buckets import AdversaryType, BucketSystem
from .engine import (Engine, ExecutionTrace, FailureEvent, Injection,
                     RecoveryEvent, ScenarioConfig, run, validate_recovery)
from .errors import ContractViolation, ModelViolation, ScenarioError
from .netmodel import Edge, Network, Packet, shortest_path_avoiding, validate_path
from .policies import PacketView, Prioritized, parse_policy, select

__all__ = [
    "AdversaryType",
    "BucketSystem",
    "ContractViolation",
    "Edge",
    "Engine",
    "ExecutionTrace",
    "FailureEvent",
    "Injection",
    "ModelViolation",
    "Network",
    "Packet",
    "PacketView",
    "Prioritized",
    "RecoveryEvent",
    "ScenarioConfig",
    "ScenarioError",
    "parse_policy",
    "run",
    "select",
    "shortest_path_avoiding",
    "validate_path",
    "validate_recovery",
]
