"""
Distributed Bayesian estimation and information-seeking control for
networks of cooperative agents.
"""
import logging

from infoseek.core import (
    AgentKind,
    ConfigError,
    DegenerateWeightsError,
    DimensionError,
    InfoseekError,
    MeasurementBundle,
    ParticleSet,
    Topology,
    TopologyError,
)

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "AgentKind",
    "ConfigError",
    "DegenerateWeightsError",
    "DimensionError",
    "InfoseekError",
    "MeasurementBundle",
    "ParticleSet",
    "Topology",
    "TopologyError",
]
