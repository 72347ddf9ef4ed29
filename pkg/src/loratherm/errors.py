"""Exception taxonomy shared across the package."""


class LoRaThermError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(LoRaThermError, ValueError):
    """A radio, energy, or protocol parameter is outside its legal domain."""


class ConfigError(LoRaThermError):
    """A scenario or runtime configuration is invalid.

    Carries the offending key path when raised during scenario validation.
    """

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class ProtocolViolation(LoRaThermError):
    """An event was fed to a MAC state it can never legally occur in."""


class FramingError(LoRaThermError):
    """A byte string does not parse as a well-formed uplink frame."""


class MalformedLineError(LoRaThermError):
    """A text line does not parse as a gateway record."""


class IntegrityError(LoRaThermError):
    """A frame parsed but its integrity code does not verify."""


class UnknownDeviceError(LoRaThermError):
    """A frame references a device address with no registered key."""
