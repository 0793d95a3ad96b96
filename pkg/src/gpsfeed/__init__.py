"""Raw transit GPS traces to trips, stop events and GTFS feeds."""

from .columns import RecordColumns
from .errors import (
    ConfigError,
    IntegrityError,
    IoError,
    PipelineError,
    RejectRatioError,
    ScenarioError,
    SchemaError,
    ValidationError,
)
from .model import (
    Direction,
    FieldMapping,
    GpsRecord,
    PipelineConfig,
    RouteDefinition,
    StopPoint,
    TerminalPoint,
    validate_config,
)
from .ingest import load_gps, load_gps_columns
from .pipeline import RunSummary, run_devices, run_full_pipeline, run_trip_pipeline

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Direction",
    "FieldMapping",
    "GpsRecord",
    "IntegrityError",
    "IoError",
    "PipelineConfig",
    "PipelineError",
    "RecordColumns",
    "RejectRatioError",
    "RouteDefinition",
    "RunSummary",
    "ScenarioError",
    "SchemaError",
    "StopPoint",
    "TerminalPoint",
    "ValidationError",
    "load_gps",
    "load_gps_columns",
    "run_devices",
    "run_full_pipeline",
    "run_trip_pipeline",
    "validate_config",
]
