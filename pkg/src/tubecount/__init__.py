"""Parking demand and utilization from pneumatic road-tube traffic counts."""

from .records import ChannelLayout, Direction, FalsePositiveRule, Pulse, VehicleRecord
from .ingest import CountConfig, ConfigError, ParseError, load_config

__all__ = [
    "ChannelLayout",
    "ConfigError",
    "CountConfig",
    "Direction",
    "FalsePositiveRule",
    "ParseError",
    "Pulse",
    "VehicleRecord",
    "load_config",
]

__version__ = "0.1.0"
