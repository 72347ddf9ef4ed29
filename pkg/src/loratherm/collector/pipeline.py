"""Ingest pipeline: verify, deduplicate, reconstruct counters, persist.

Frame counters travel as 16 bits and wrap; the pipeline widens them to
an extended counter per device. A received value is matched forward
within 16384 counts of the highest counter seen; a small backward
window additionally catches late or duplicated copies of recent frames
arriving out of order. Anything else is treated as a device reset and
opens a new counter epoch (the next multiple of 65536), preserving
uniqueness of extended counters across reboots.

Per-device reception is tracked as a bitmap over extended counters, so
duplicate detection is exact and gap reports are cheap. The index is
rebuilt from the store on startup; ingest is a total function returning
an outcome per line, never raising on bad input.
"""

from __future__ import annotations

import csv
import enum
import threading
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from ..codec import decode_frame
from ..errors import (
    FramingError,
    IntegrityError,
    MalformedLineError,
    UnknownDeviceError,
)
from .lineproto import GatewayLine, format_timestamp, parse_gateway_line
from .store import DuplicateMarker, MeasurementRecord, Store

FORWARD_WINDOW = 16384
BACKWARD_WINDOW = 1024
EPOCH_SPAN = 1 << 16


class IngestOutcome(enum.Enum):
    ACCEPTED = "accepted"
    DUPLICATE = "duplicate"
    MALFORMED = "malformed"
    INTEGRITY_REJECT = "integrity_reject"
    UNKNOWN_DEVICE = "unknown_device"


@dataclass
class _Segment:
    """Contiguous counter range between two detected resets.

    base is the extended value corresponding to wire counter zero at the
    start of the segment; min/max are the extremes actually received.
    The 16-bit counter may wrap many times inside one segment.
    """

    base: int
    min_ext: int
    max_ext: int


@dataclass
class _Track:
    """Per-device reception index."""

    last_ext: int | None = None
    received: bytearray = field(default_factory=bytearray)
    segments: list[_Segment] = field(default_factory=list)
    accepted: int = 0
    duplicates: int = 0

    def mark(self, ext: int) -> None:
        if ext >= len(self.received):
            self.received.extend(b"\x00" * (ext + 1 - len(self.received)))
        self.received[ext] = 1

    def seen(self, ext: int) -> bool:
        return ext < len(self.received) and self.received[ext] == 1


class Collector:
    """Stateful ingest front end over a Store."""

    def __init__(self, store: Store, keys: dict[int, bytes]):
        self.store = store
        self.keys = dict(keys)
        self.counts = {outcome: 0 for outcome in IngestOutcome}
        self._tracks: dict[int, _Track] = {}
        self._lock = threading.Lock()
        self._rebuild()

    # -- index maintenance -------------------------------------------------

    def _track(self, dev_addr: int) -> _Track:
        track = self._tracks.get(dev_addr)
        if track is None:
            track = _Track()
            self._tracks[dev_addr] = track
        return track

    @staticmethod
    def _note_segment(track: _Track, ext: int, is_reset: bool, wire: int) -> None:
        if is_reset or not track.segments:
            track.segments.append(_Segment(base=ext - wire, min_ext=ext, max_ext=ext))
            return
        seg = track.segments[-1]
        if ext < seg.min_ext:
            seg.min_ext = ext
        if ext > seg.max_ext:
            seg.max_ext = ext

    def _rebuild(self) -> None:
        # Replay in append order. A forward jump wider than the forward
        # window can only have come from the reset branch of ingest, so
        # reset boundaries are recoverable without extra bookkeeping.
        for obj in self.store.iter_raw():
            kind = obj.get("t")
            track = self._track(obj["dev"])
            ext = obj["ext"]
            if kind == "meas":
                was_reset = (
                    track.last_ext is not None and ext - track.last_ext > FORWARD_WINDOW
                )
                track.mark(ext)
                track.accepted += 1
                self._note_segment(track, ext, was_reset, obj["fcnt"])
                if track.last_ext is None or ext > track.last_ext:
                    track.last_ext = ext
            elif kind == "dup":
                track.duplicates += 1

    # -- ingest -------------------------------------------------------------

    def _extend_fcnt(self, track: _Track, wire: int) -> tuple[int, bool]:
        """Map a 16-bit wire counter to (extended counter, reset flag)."""
        if track.last_ext is None:
            return wire, False
        last_wire = track.last_ext & 0xFFFF
        delta = (wire - last_wire) & 0xFFFF
        if delta <= FORWARD_WINDOW:
            return track.last_ext + delta, False
        back = EPOCH_SPAN - delta
        candidate = track.last_ext - back
        segment_base = track.segments[-1].base if track.segments else 0
        if back <= BACKWARD_WINDOW and candidate >= segment_base:
            return candidate, False
        # Out of both windows: a reset. New segment above everything seen,
        # aligned so extended values stay congruent to the wire counter.
        return ((track.last_ext // EPOCH_SPAN) + 1) * EPOCH_SPAN + wire, True

    def ingest(self, line: GatewayLine) -> tuple[IngestOutcome, MeasurementRecord | None]:
        with self._lock:
            return self._ingest_locked(line)

    def _ingest_locked(self, line: GatewayLine) -> tuple[IngestOutcome, MeasurementRecord | None]:
        try:
            frame = decode_frame(line.frame, self.keys.get)
        except (FramingError, ValueError):
            self.counts[IngestOutcome.MALFORMED] += 1
            return IngestOutcome.MALFORMED, None
        except UnknownDeviceError:
            self.counts[IngestOutcome.UNKNOWN_DEVICE] += 1
            return IngestOutcome.UNKNOWN_DEVICE, None
        except IntegrityError:
            self.counts[IngestOutcome.INTEGRITY_REJECT] += 1
            return IngestOutcome.INTEGRITY_REJECT, None

        track = self._track(frame.dev_addr)
        ext, was_reset = self._extend_fcnt(track, frame.fcnt)
        if track.seen(ext):
            track.duplicates += 1
            if track.last_ext is not None and ext > track.last_ext:
                track.last_ext = ext
            self.counts[IngestOutcome.DUPLICATE] += 1
            self.store.append_duplicate(
                DuplicateMarker(dev_addr=frame.dev_addr, ext_fcnt=ext, ts=line.ts)
            )
            return IngestOutcome.DUPLICATE, None

        record = MeasurementRecord(
            dev_addr=frame.dev_addr,
            ext_fcnt=ext,
            wire_fcnt=frame.fcnt,
            ts=line.ts,
            temp_centi_c=frame.payload.temp_centi_c,
            rh_centi_pct=frame.payload.rh_centi_pct,
            battery_mv=frame.payload.battery_mv,
            conflict_counter=frame.payload.conflict_counter,
            rssi_dbm=line.rssi_dbm,
            snr_db=line.snr_db,
            channel=line.channel,
            sf=line.sf,
            out_of_range=not frame.payload.in_physical_range,
            retransmission=track.last_ext is not None and ext < track.last_ext,
        )
        track.mark(ext)
        track.accepted += 1
        self._note_segment(track, ext, was_reset, frame.fcnt)
        if track.last_ext is None or ext > track.last_ext:
            track.last_ext = ext
        self.counts[IngestOutcome.ACCEPTED] += 1
        self.store.append(record)
        return IngestOutcome.ACCEPTED, record

    def ingest_line(self, text: str) -> tuple[IngestOutcome, MeasurementRecord | None]:
        try:
            line = parse_gateway_line(text)
        except MalformedLineError:
            with self._lock:
                self.counts[IngestOutcome.MALFORMED] += 1
            return IngestOutcome.MALFORMED, None
        return self.ingest(line)

    # -- reports ------------------------------------------------------------

    def device_addresses(self) -> list[int]:
        return sorted(self._tracks)

    def resets(self, dev_addr: int) -> int:
        track = self._tracks.get(dev_addr)
        if track is None:
            return 0
        return max(0, len(track.segments) - 1)

    def detect_gaps(
        self, dev_addr: int, lo: int | None = None, hi: int | None = None
    ) -> list[tuple[int, int]]:
        """Missing extended-counter runs, as inclusive (start, end) pairs.

        Only ranges between the first and last received counter of each
        reset segment count as gaps; optional bounds clip the scan.
        """
        track = self._tracks.get(dev_addr)
        if track is None:
            return []
        bitmap = np.frombuffer(bytes(track.received), dtype=np.uint8)
        gaps: list[tuple[int, int]] = []
        for seg in track.segments:
            start = seg.min_ext if lo is None else max(seg.min_ext, lo)
            end = seg.max_ext if hi is None else min(seg.max_ext, hi)
            if end <= start:
                continue
            window = bitmap[start : end + 1]
            missing = np.flatnonzero(window == 0)
            if missing.size == 0:
                continue
            run_start = int(missing[0])
            prev = run_start
            for idx in missing[1:]:
                idx = int(idx)
                if idx != prev + 1:
                    gaps.append((start + run_start, start + prev))
                    run_start = idx
                prev = idx
            gaps.append((start + run_start, start + prev))
        return gaps

    def missing_counters(self, dev_addr: int) -> list[int]:
        return [ext for lo, hi in self.detect_gaps(dev_addr) for ext in range(lo, hi + 1)]

    def continuity(self, dev_addr: int) -> dict:
        track = self._tracks.get(dev_addr)
        if track is None:
            return {"received": 0, "expected": 0, "completeness": 1.0, "gaps": 0, "missing": 0}
        expected = sum(s.max_ext - s.min_ext + 1 for s in track.segments)
        gaps = self.detect_gaps(dev_addr)
        missing = sum(hi - lo + 1 for lo, hi in gaps)
        received = expected - missing
        return {
            "received": received,
            "expected": expected,
            "completeness": received / expected if expected else 1.0,
            "gaps": len(gaps),
            "missing": missing,
        }

    def report(self, since: datetime | None = None, until: datetime | None = None) -> dict:
        """Aggregate statistics over a time window (whole store when open).

        Conflict pressure is reported two ways: the share of arrivals
        the server saw as duplicates, and the growth of the on-device
        unacknowledged-transmission counter carried in the payloads.
        """
        per_node: dict[int, dict] = {}
        total_points = 0
        for rec in self.store.iter_records(since, until):
            node = per_node.get(rec.dev_addr)
            if node is None:
                node = {
                    "dev_addr": rec.dev_addr,
                    "points": 0,
                    "first_ts": rec.ts,
                    "last_ts": rec.ts,
                    "min_ext": rec.ext_fcnt,
                    "max_ext": rec.ext_fcnt,
                    "temp_sum": 0.0,
                    "temp_min": rec.temp_centi_c,
                    "temp_max": rec.temp_centi_c,
                    "rh_sum": 0.0,
                    "battery_first_mv": rec.battery_mv,
                    "battery_last_mv": rec.battery_mv,
                    "conflict_first": rec.conflict_counter,
                    "conflict_last": rec.conflict_counter,
                    "out_of_range": 0,
                }
                per_node[rec.dev_addr] = node
            node["points"] += 1
            total_points += 1
            if rec.ts < node["first_ts"]:
                node["first_ts"] = rec.ts
                node["battery_first_mv"] = rec.battery_mv
                node["conflict_first"] = rec.conflict_counter
            if rec.ts >= node["last_ts"]:
                node["last_ts"] = rec.ts
                node["battery_last_mv"] = rec.battery_mv
                node["conflict_last"] = rec.conflict_counter
            node["min_ext"] = min(node["min_ext"], rec.ext_fcnt)
            node["max_ext"] = max(node["max_ext"], rec.ext_fcnt)
            node["temp_sum"] += rec.temp_centi_c
            node["temp_min"] = min(node["temp_min"], rec.temp_centi_c)
            node["temp_max"] = max(node["temp_max"], rec.temp_centi_c)
            node["rh_sum"] += rec.rh_centi_pct
            node["out_of_range"] += 1 if rec.out_of_range else 0

        nodes_out = []
        total_gaps = 0
        total_missing = 0
        total_expected = 0
        conflict_delta_total = 0
        for dev_addr in sorted(per_node):
            node = per_node[dev_addr]
            gaps = self.detect_gaps(dev_addr, node["min_ext"], node["max_ext"])
            missing = sum(hi - lo + 1 for lo, hi in gaps)
            expected = node["max_ext"] - node["min_ext"] + 1
            conflict_delta = (node["conflict_last"] - node["conflict_first"]) & 0xFFFF
            conflict_delta_total += conflict_delta
            total_gaps += len(gaps)
            total_missing += missing
            total_expected += expected
            track = self._tracks[dev_addr]
            nodes_out.append(
                {
                    "dev_addr": dev_addr,
                    "points": node["points"],
                    "first_ts": format_timestamp(node["first_ts"]),
                    "last_ts": format_timestamp(node["last_ts"]),
                    "expected": expected,
                    "completeness": (expected - missing) / expected if expected else 1.0,
                    "gaps": len(gaps),
                    "missing": missing,
                    "temp_mean_c": round(node["temp_sum"] / node["points"] / 100.0, 3),
                    "temp_min_c": node["temp_min"] / 100.0,
                    "temp_max_c": node["temp_max"] / 100.0,
                    "rh_mean_pct": round(node["rh_sum"] / node["points"] / 100.0, 3),
                    "battery_first_mv": node["battery_first_mv"],
                    "battery_last_mv": node["battery_last_mv"],
                    "conflict_delta": conflict_delta,
                    "out_of_range": node["out_of_range"],
                    "resets": self.resets(dev_addr),
                    "duplicates": track.duplicates,
                }
            )

        duplicates = sum(track.duplicates for track in self._tracks.values())
        arrivals = total_points + duplicates
        return {
            "points": total_points,
            "nodes": len(nodes_out),
            "empty": total_points == 0,
            "duplicates": duplicates,
            "server_duplicate_ratio": duplicates / arrivals if arrivals else 0.0,
            "node_conflict_delta": conflict_delta_total,
            "node_conflict_ratio": (
                conflict_delta_total / total_points if total_points else 0.0
            ),
            "gaps": total_gaps,
            "missing": total_missing,
            "completeness": (
                (total_expected - total_missing) / total_expected if total_expected else 1.0
            ),
            "resets": sum(self.resets(d) for d in per_node),
            "counts": {outcome.value: self.counts[outcome] for outcome in IngestOutcome},
            "per_node": nodes_out,
        }

    def export_csv(
        self, path: str, since: datetime | None = None, until: datetime | None = None
    ) -> int:
        """Write records in the window as CSV; returns the row count.

        fcnt is the reconstructed extended counter (the record's identity),
        not the 16-bit wire value.
        """
        rows = 0
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for rec in self.store.iter_records(since, until):
                writer.writerow(
                    [
                        format_timestamp(rec.ts),
                        f"{rec.dev_addr:08x}",
                        rec.ext_fcnt,
                        f"{rec.temp_centi_c / 100.0:.2f}",
                        f"{rec.rh_centi_pct / 100.0:.2f}",
                        rec.battery_mv,
                        rec.conflict_counter,
                        rec.rssi_dbm,
                        f"{rec.snr_db:.1f}",
                        int(rec.retransmission),
                    ]
                )
                rows += 1
        return rows


CSV_COLUMNS = [
    "ts",
    "dev_addr",
    "fcnt",
    "temp_c",
    "rh_pct",
    "battery_mv",
    "conflicts",
    "rssi_dbm",
    "snr_db",
    "retx",
]


def read_csv_records(path: str) -> list[dict]:
    """Inverse of export_csv for round-trip checking."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)
