"""Uplink frame codec.

Wire format (21 bytes, little-endian multi-byte fields):

    mhdr     1  0x40 unconfirmed up / 0x80 confirmed up
    dev_addr 4
    fctrl    1  always 0x00 on this uplink path
    fcnt     2  low 16 bits of the frame counter
    fport    1  always 0x01 (sensor report)
    payload  8  see SensorPayload
    mic      4  AES-128-CMAC over the preceding 17 bytes, truncated

The payload carries one measurement: temperature (centi-degC, signed),
relative humidity (centi-%), battery voltage (mV) and the device's
running transmit-conflict counter, all 16-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import algorithms

from .errors import FramingError, IntegrityError, ParameterError, UnknownDeviceError

MHDR_UNCONFIRMED_UP = 0x40
MHDR_CONFIRMED_UP = 0x80
FCTRL_UPLINK = 0x00
FPORT_SENSOR = 0x01

PAYLOAD_LEN = 8
MIC_LEN = 4
HEADER_LEN = 9
FRAME_LEN = HEADER_LEN + PAYLOAD_LEN + MIC_LEN

_PAYLOAD_STRUCT = struct.Struct("<hHHH")

# Physical plausibility window for decoded measurements. Values outside
# are still decoded faithfully, only flagged.
TEMP_RANGE_CENTI = (-4000, 12500)
RH_RANGE_CENTI = (0, 10000)
BATTERY_RANGE_MV = (1800, 4300)


@dataclass(frozen=True)
class SensorPayload:
    """One decoded measurement."""

    temp_centi_c: int
    rh_centi_pct: int
    battery_mv: int
    conflict_counter: int

    def __post_init__(self):
        if not -32768 <= self.temp_centi_c <= 32767:
            raise ParameterError(f"temp_centi_c out of int16 range: {self.temp_centi_c}")
        for name in ("rh_centi_pct", "battery_mv", "conflict_counter"):
            value = getattr(self, name)
            if not 0 <= value <= 0xFFFF:
                raise ParameterError(f"{name} out of uint16 range: {value}")

    @property
    def temp_c(self) -> float:
        return self.temp_centi_c / 100.0

    @property
    def rh_pct(self) -> float:
        return self.rh_centi_pct / 100.0

    @property
    def in_physical_range(self) -> bool:
        return (
            TEMP_RANGE_CENTI[0] <= self.temp_centi_c <= TEMP_RANGE_CENTI[1]
            and RH_RANGE_CENTI[0] <= self.rh_centi_pct <= RH_RANGE_CENTI[1]
            and BATTERY_RANGE_MV[0] <= self.battery_mv <= BATTERY_RANGE_MV[1]
        )

    @classmethod
    def from_physical(
        cls, temp_c: float, rh_pct: float, battery_mv: int, conflict_counter: int
    ) -> "SensorPayload":
        return cls(
            temp_centi_c=int(round(temp_c * 100.0)),
            rh_centi_pct=int(round(rh_pct * 100.0)),
            battery_mv=battery_mv,
            conflict_counter=conflict_counter & 0xFFFF,
        )


def encode_payload(payload: SensorPayload) -> bytes:
    return _PAYLOAD_STRUCT.pack(
        payload.temp_centi_c,
        payload.rh_centi_pct,
        payload.battery_mv,
        payload.conflict_counter,
    )


def decode_payload(data: bytes) -> SensorPayload:
    if len(data) != PAYLOAD_LEN:
        raise FramingError(f"payload must be {PAYLOAD_LEN} bytes, got {len(data)}")
    temp, rh, mv, conflicts = _PAYLOAD_STRUCT.unpack(data)
    return SensorPayload(temp, rh, mv, conflicts)


def aes_cmac(key: bytes, message: bytes) -> bytes:
    """Full 16-byte AES-128-CMAC tag."""
    if len(key) != 16:
        raise ParameterError(f"key must be 16 bytes, got {len(key)}")
    mac = cmac.CMAC(algorithms.AES(key))
    mac.update(message)
    return mac.finalize()


def compute_mic(key: bytes, header_and_payload: bytes) -> bytes:
    """Truncated frame integrity code over header plus payload."""
    if len(header_and_payload) != HEADER_LEN + PAYLOAD_LEN:
        raise FramingError(
            f"mic input must be {HEADER_LEN + PAYLOAD_LEN} bytes, got {len(header_and_payload)}"
        )
    return aes_cmac(key, header_and_payload)[:MIC_LEN]


@dataclass(frozen=True)
class UplinkFrame:
    """A parsed and integrity-checked uplink."""

    dev_addr: int
    fcnt: int
    confirmed: bool
    payload: SensorPayload
    mic: bytes


def encode_frame(
    payload: SensorPayload,
    dev_addr: int,
    fcnt: int,
    key: bytes,
    confirmed: bool = True,
) -> bytes:
    if not 0 <= dev_addr <= 0xFFFFFFFF:
        raise ParameterError(f"dev_addr out of uint32 range: {dev_addr}")
    if fcnt < 0:
        raise ParameterError(f"fcnt must be non-negative, got {fcnt}")
    mhdr = MHDR_CONFIRMED_UP if confirmed else MHDR_UNCONFIRMED_UP
    head = struct.pack(
        "<BIBHB", mhdr, dev_addr, FCTRL_UPLINK, fcnt & 0xFFFF, FPORT_SENSOR
    )
    body = head + encode_payload(payload)
    return body + compute_mic(key, body)


def decode_frame(frame: bytes, key_lookup: Callable[[int], bytes | None]) -> UplinkFrame:
    """Parse and verify one uplink frame.

    ``key_lookup`` maps a device address to its 16-byte key, or None if
    the address is not registered.

    Raises FramingError for structural problems, UnknownDeviceError for
    an unregistered address, IntegrityError when the integrity code does
    not match.
    """
    if len(frame) != FRAME_LEN:
        raise FramingError(f"frame must be {FRAME_LEN} bytes, got {len(frame)}")
    mhdr, dev_addr, fctrl, fcnt, fport = struct.unpack("<BIBHB", frame[:HEADER_LEN])
    if mhdr not in (MHDR_UNCONFIRMED_UP, MHDR_CONFIRMED_UP):
        raise FramingError(f"unsupported mhdr 0x{mhdr:02x}")
    if fctrl != FCTRL_UPLINK:
        raise FramingError(f"unsupported fctrl 0x{fctrl:02x}")
    if fport != FPORT_SENSOR:
        raise FramingError(f"unsupported fport {fport}")
    key = key_lookup(dev_addr)
    if key is None:
        raise UnknownDeviceError(f"no key for device 0x{dev_addr:08x}")
    expected = compute_mic(key, frame[: HEADER_LEN + PAYLOAD_LEN])
    mic = frame[HEADER_LEN + PAYLOAD_LEN :]
    if mic != expected:
        raise IntegrityError(f"mic mismatch for device 0x{dev_addr:08x} fcnt {fcnt}")
    return UplinkFrame(
        dev_addr=dev_addr,
        fcnt=fcnt,
        confirmed=(mhdr == MHDR_CONFIRMED_UP),
        payload=decode_payload(frame[HEADER_LEN : HEADER_LEN + PAYLOAD_LEN]),
        mic=mic,
    )


def derive_device_key(root_key: bytes, dev_addr: int) -> bytes:
    """Per-device key: CMAC of the address under a scenario root key.

    Deterministic so simulator and collector can agree on keys without
    shipping a key file alongside every run.
    """
    return aes_cmac(root_key, b"devkey" + struct.pack("<I", dev_addr))
