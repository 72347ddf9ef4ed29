"""Battery-powered LoRaWAN sensor fleet: simulator and telemetry collector."""

__version__ = "0.1.0"
