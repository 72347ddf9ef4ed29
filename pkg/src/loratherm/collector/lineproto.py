"""Gateway line protocol.

One received uplink per text line, as space-separated ``key=value``
tokens. Keys may appear in any order; unknown keys are ignored so the
format can grow without breaking old parsers. Required keys:

    ts=<ISO-8601 timestamp>  rssi=<int dBm>  snr=<float dB>
    chan=<int>  sf=<int>  frame=<base64 of the 21-byte uplink>
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass
from datetime import datetime, timezone

from ..errors import MalformedLineError


@dataclass(frozen=True)
class GatewayLine:
    ts: datetime
    rssi_dbm: int
    snr_db: float
    channel: int
    sf: int
    frame: bytes


def parse_timestamp(text: str) -> datetime:
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise MalformedLineError(f"bad timestamp {text!r}: {exc}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def parse_gateway_line(line: str) -> GatewayLine:
    fields: dict[str, str] = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise MalformedLineError(f"token {token!r} is not key=value")
        fields[key] = value

    missing = {"ts", "rssi", "snr", "chan", "sf", "frame"} - set(fields)
    if missing:
        raise MalformedLineError(f"missing keys {sorted(missing)}")

    ts = parse_timestamp(fields["ts"])
    try:
        rssi = int(fields["rssi"])
        channel = int(fields["chan"])
        sf = int(fields["sf"])
        snr = float(fields["snr"])
    except ValueError as exc:
        raise MalformedLineError(str(exc)) from None
    try:
        frame = base64.b64decode(fields["frame"], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedLineError(f"bad frame encoding: {exc}") from None
    return GatewayLine(ts=ts, rssi_dbm=rssi, snr_db=snr, channel=channel, sf=sf, frame=frame)


def format_gateway_line(gl: GatewayLine) -> str:
    return (
        f"ts={format_timestamp(gl.ts)} rssi={gl.rssi_dbm} snr={gl.snr_db:.1f} "
        f"chan={gl.channel} sf={gl.sf} frame={base64.b64encode(gl.frame).decode()}"
    )
