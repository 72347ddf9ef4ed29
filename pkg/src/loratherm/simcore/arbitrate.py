"""Collision arbitration for overlapping transmissions.

Two attempts interfere only on the same channel at the same spreading
factor (different factors are treated as orthogonal). An attempt is
delivered when its received power exceeds that of every interferer it
overlaps by at least the capture threshold; otherwise every member of
the overlapping cluster that lacks such dominance is lost. Attempts
arriving below the demodulation floor fail regardless of traffic and
are classified separately.

``arbitrate`` is the quadratic reference used directly on attempt
batches; ``OnAirTracker`` computes the same verdicts incrementally for
the event engines (every overlapping pair is observed at insertion
time, because an attempt enters the tracker before it starts and leaves
when it ends).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from ..errors import ParameterError

NO_INTERFERENCE_DBM = -math.inf


class Outcome(enum.IntEnum):
    DELIVERED = 0
    COLLIDED = 1
    BELOW_SENSITIVITY = 2


@dataclass(frozen=True)
class TransmissionAttempt:
    start_s: float
    airtime_s: float
    channel: int
    sf: int
    rx_power_dbm: float
    floor_dbm: float

    @property
    def end_s(self) -> float:
        return self.start_s + self.airtime_s


def _overlaps(a: TransmissionAttempt, b: TransmissionAttempt) -> bool:
    # Half-open intervals: a frame ending exactly when another starts
    # does not interfere with it.
    return a.start_s < b.end_s and b.start_s < a.end_s


def arbitrate(
    attempts: Sequence[TransmissionAttempt], capture_threshold_db: float = 6.0
) -> list[Outcome]:
    """Outcome per attempt, order-preserving."""
    if capture_threshold_db < 0:
        raise ParameterError(f"capture_threshold_db must be non-negative, got {capture_threshold_db}")
    outcomes = []
    for i, a in enumerate(attempts):
        if a.rx_power_dbm < a.floor_dbm:
            outcomes.append(Outcome.BELOW_SENSITIVITY)
            continue
        strongest_other = NO_INTERFERENCE_DBM
        for j, b in enumerate(attempts):
            if i == j or a.channel != b.channel or a.sf != b.sf:
                continue
            if _overlaps(a, b):
                strongest_other = max(strongest_other, b.rx_power_dbm)
        if a.rx_power_dbm >= strongest_other + capture_threshold_db:
            outcomes.append(Outcome.DELIVERED)
        else:
            outcomes.append(Outcome.COLLIDED)
    return outcomes


class OnAirTracker:
    """Incremental interference bookkeeping for one channel.

    Usage per attempt: ``insert`` at or before its start time, then
    ``remove`` at its end time, which returns the strongest same-SF
    power it overlapped. Insertions must happen no later than the
    attempt's start; removals exactly at its end. Under that protocol
    every overlapping pair is present together at one of the two
    insertion instants.
    """

    __slots__ = ("_active",)

    def __init__(self):
        # [start, end, sf, rx_power, strongest_other] per in-flight attempt
        self._active: list[list] = []

    def insert(self, start_s: float, end_s: float, sf: int, rx_power_dbm: float) -> int:
        entry = [start_s, end_s, sf, rx_power_dbm, NO_INTERFERENCE_DBM]
        for other in self._active:
            if other[2] != sf:
                continue
            if start_s < other[1] and other[0] < end_s:
                if other[3] > entry[4]:
                    entry[4] = other[3]
                if rx_power_dbm > other[4]:
                    other[4] = rx_power_dbm
        self._active.append(entry)
        return id(entry)

    def remove(self, token: int) -> float:
        """Drop the attempt and return its strongest observed interferer."""
        for idx, entry in enumerate(self._active):
            if id(entry) == token:
                self._active.pop(idx)
                return entry[4]
        raise ParameterError("unknown on-air token")

    def __len__(self) -> int:
        return len(self._active)


def analytic_conflict_ratio(
    n_nodes: int, period_s: float, airtime_s: float, channels: int = 1
) -> float:
    """Expected share of colliding transmissions under unslotted random access.

    Each of ``n_nodes`` transmitters sends a frame of ``airtime_s``
    once per ``period_s`` at an independent uniform phase on one of
    ``channels`` equally likely channels. A given frame survives only
    if none of the other n-1 frames starts within +-airtime of it on
    its channel:

        p = 1 - (1 - 2 * airtime / (period * channels)) ** (n_nodes - 1)
    """
    if n_nodes < 1:
        raise ParameterError(f"n_nodes must be >= 1, got {n_nodes}")
    if channels < 1:
        raise ParameterError(f"channels must be >= 1, got {channels}")
    if period_s <= 0:
        raise ParameterError(f"period_s must be positive, got {period_s}")
    if airtime_s <= 0:
        raise ParameterError(f"airtime_s must be positive, got {airtime_s}")
    if airtime_s >= period_s:
        raise ParameterError(f"airtime_s ({airtime_s}) must be below period_s ({period_s})")
    vulnerable = 2.0 * airtime_s / (period_s * channels)
    if vulnerable >= 1.0:
        return 1.0
    return 1.0 - (1.0 - vulnerable) ** (n_nodes - 1)
