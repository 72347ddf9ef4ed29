"""Append-only measurement store.

One JSON object per line, split across per-day files named
``measurements-YYYYMMDD`` (UTC day of the record timestamp). Two line
types exist: ``meas`` (a MeasurementRecord) and ``dup`` (a duplicate
arrival marker, kept so duplicate statistics survive an index rebuild).
Files are only ever appended to; nothing in the pipeline rewrites or
deletes a line.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterator

from ..errors import ConfigError
from .lineproto import format_timestamp, parse_timestamp

FILE_PREFIX = "measurements-"


@dataclass(frozen=True)
class MeasurementRecord:
    dev_addr: int
    ext_fcnt: int  # reconstructed full counter: reset-epoch base + wire count
    wire_fcnt: int
    ts: datetime
    temp_centi_c: int
    rh_centi_pct: int
    battery_mv: int
    conflict_counter: int
    rssi_dbm: int
    snr_db: float
    channel: int
    sf: int
    out_of_range: bool
    # Accepted out of counter order: a copy whose original delivery was
    # missed, so it must have been a link-layer retransmission.
    retransmission: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": "meas",
                "dev": self.dev_addr,
                "ext": self.ext_fcnt,
                "fcnt": self.wire_fcnt,
                "ts": format_timestamp(self.ts),
                "temp": self.temp_centi_c,
                "rh": self.rh_centi_pct,
                "mv": self.battery_mv,
                "conf": self.conflict_counter,
                "rssi": self.rssi_dbm,
                "snr": self.snr_db,
                "chan": self.channel,
                "sf": self.sf,
                "oor": self.out_of_range,
                "retx": self.retransmission,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, obj: dict) -> "MeasurementRecord":
        return cls(
            dev_addr=obj["dev"],
            ext_fcnt=obj["ext"],
            wire_fcnt=obj["fcnt"],
            ts=parse_timestamp(obj["ts"]),
            temp_centi_c=obj["temp"],
            rh_centi_pct=obj["rh"],
            battery_mv=obj["mv"],
            conflict_counter=obj["conf"],
            rssi_dbm=obj["rssi"],
            snr_db=obj["snr"],
            channel=obj["chan"],
            sf=obj["sf"],
            out_of_range=obj["oor"],
            retransmission=obj.get("retx", False),
        )


@dataclass(frozen=True)
class DuplicateMarker:
    dev_addr: int
    ext_fcnt: int
    ts: datetime

    def to_json(self) -> str:
        return json.dumps(
            {"t": "dup", "dev": self.dev_addr, "ext": self.ext_fcnt, "ts": format_timestamp(self.ts)},
            separators=(",", ":"),
        )


class Store:
    """Per-day append-only files plus a handle cache; thread-safe."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        if not os.path.isdir(root):
            raise ConfigError(f"store root {root!r} is not a directory", "store")
        self._lock = threading.Lock()
        self._handles: dict[str, object] = {}

    def _day_path(self, ts: datetime) -> str:
        day = ts.astimezone(timezone.utc).strftime("%Y%m%d")
        return os.path.join(self.root, FILE_PREFIX + day)

    def _append_line(self, ts: datetime, line: str) -> None:
        path = self._day_path(ts)
        with self._lock:
            fh = self._handles.get(path)
            if fh is None:
                fh = open(path, "a", encoding="utf-8")
                self._handles[path] = fh
            fh.write(line)
            fh.write("\n")

    def append(self, record: MeasurementRecord) -> None:
        self._append_line(record.ts, record.to_json())

    def append_duplicate(self, marker: DuplicateMarker) -> None:
        self._append_line(marker.ts, marker.to_json())

    def flush(self) -> None:
        with self._lock:
            for fh in self._handles.values():
                fh.flush()

    def close(self) -> None:
        with self._lock:
            for fh in self._handles.values():
                fh.close()
            self._handles.clear()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def day_files(self) -> list[str]:
        names = [
            name
            for name in os.listdir(self.root)
            if name.startswith(FILE_PREFIX) and name[len(FILE_PREFIX) :].isdigit()
        ]
        return [os.path.join(self.root, name) for name in sorted(names)]

    def iter_raw(self) -> Iterator[dict]:
        """Every stored line as a dict, file order then line order."""
        self.flush()
        for path in self.day_files():
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        yield json.loads(line)

    def iter_records(
        self, since: datetime | None = None, until: datetime | None = None
    ) -> Iterator[MeasurementRecord]:
        """Measurement records with ts in [since, until), store order."""
        self.flush()
        for path in self.day_files():
            day = os.path.basename(path)[len(FILE_PREFIX) :]
            day_start = datetime.strptime(day, "%Y%m%d").replace(tzinfo=timezone.utc)
            if until is not None and day_start >= until:
                continue
            for obj in self._iter_file(path):
                if obj.get("t") != "meas":
                    continue
                record = MeasurementRecord.from_json(obj)
                if since is not None and record.ts < since:
                    continue
                if until is not None and record.ts >= until:
                    continue
                yield record

    def _iter_file(self, path: str) -> Iterator[dict]:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)
