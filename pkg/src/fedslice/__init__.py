"""Simulator and successive-GP optimizer for D2D-assisted federated
learning over a sliced radio access network."""

from .config import ConfigError, ExperimentConfig, load_scenario_file
from .network import (ChannelState, FluParams, NetworkScenario, OruParams,
                      build_scenario, channel_gain, prb_bandwidth)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "load_scenario_file",
    "ChannelState", "FluParams", "NetworkScenario", "OruParams",
    "build_scenario", "channel_gain", "prb_bandwidth",
]
