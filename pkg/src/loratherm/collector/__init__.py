"""Telemetry collection: gateway line protocol, ingest pipeline, storage."""

from .lineproto import (
    GatewayLine,
    format_gateway_line,
    format_timestamp,
    parse_gateway_line,
    parse_timestamp,
)
from .pipeline import (
    BACKWARD_WINDOW,
    CSV_COLUMNS,
    FORWARD_WINDOW,
    Collector,
    IngestOutcome,
    read_csv_records,
)
from .server import CollectorServer, serve
from .store import DuplicateMarker, MeasurementRecord, Store

__all__ = [
    "BACKWARD_WINDOW",
    "CSV_COLUMNS",
    "Collector",
    "CollectorServer",
    "DuplicateMarker",
    "FORWARD_WINDOW",
    "GatewayLine",
    "IngestOutcome",
    "MeasurementRecord",
    "Store",
    "format_gateway_line",
    "format_timestamp",
    "parse_gateway_line",
    "parse_timestamp",
    "read_csv_records",
    "serve",
]
