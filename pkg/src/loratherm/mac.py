"""Class A uplink MAC: reporting cycle, receive windows, retransmission.

The node state machine is a pure function ``advance(state, config,
event, now)``: it never touches global state, all randomness enters
through an injected backoff draw, and every transition returns a fresh
``NodeState`` plus the side effects the caller must schedule. The event
engines implement a flattened equivalent of this machine for speed; the
test suite replays engine traces through ``advance`` to keep the two in
lock step.

Regulatory duty cycle is enforced by ``DutyBudget``: a rolling-window
ledger of granted airtime that computes the earliest legal start time
for the next transmission.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

from .errors import ConfigError, ParameterError, ProtocolViolation
from .phy import RadioParams

# Class A receive window schedule, seconds after end of uplink.
RX1_DELAY_S = 1.0
RX2_DELAY_S = 2.0
RX_WINDOW_S = 0.030

MAX_TRANSMISSIONS_DEFAULT = 8
BACKOFF_MIN_FACTOR = 1.0
BACKOFF_MAX_FACTOR = 3.0

DUTY_WINDOW_S = 3600.0
DUTY_MAX_FRACTION = 0.01


class Phase(enum.Enum):
    SLEEP = "sleep"
    SENSE = "sense"
    TRANSMIT = "transmit"
    WAIT_RX1 = "wait_rx1"
    RX1 = "rx1"
    WAIT_RX2 = "wait_rx2"
    RX2 = "rx2"
    BACKOFF = "backoff"


class MacEvent(enum.Enum):
    TIMER_FIRED = "timer_fired"
    TX_DONE = "tx_done"
    ACK_RECEIVED = "ack_received"
    WINDOW_EMPTY = "window_empty"


@dataclass(frozen=True)
class NodeConfig:
    """Static per-node configuration."""

    dev_addr: int
    radio: RadioParams = RadioParams()
    period_s: float = 30.0
    confirmed: bool = True
    max_transmissions: int = MAX_TRANSMISSIONS_DEFAULT
    sense_time_s: float = 0.050
    rx1_delay_s: float = RX1_DELAY_S
    rx2_delay_s: float = RX2_DELAY_S
    rx_window_s: float = RX_WINDOW_S
    distance_m: float = 50.0
    wall_penalty_db: float = 0.0
    battery_mah: float = 1000.0
    # Wake jitter bound per reporting slot; None means one full period,
    # i.e. wake phases are uniform over the slot.
    jitter_s: float | None = None

    def __post_init__(self):
        if not 0 <= self.dev_addr <= 0xFFFFFFFF:
            raise ParameterError(f"dev_addr out of uint32 range: {self.dev_addr}")
        if self.period_s <= 0:
            raise ParameterError(f"period_s must be positive, got {self.period_s}")
        if self.max_transmissions < 1:
            raise ParameterError(f"max_transmissions must be >= 1, got {self.max_transmissions}")
        if self.sense_time_s < 0:
            raise ParameterError(f"sense_time_s must be non-negative, got {self.sense_time_s}")
        if self.rx1_delay_s <= 0 or self.rx2_delay_s <= self.rx1_delay_s:
            raise ParameterError("require 0 < rx1_delay_s < rx2_delay_s")
        if self.rx_window_s <= 0 or self.rx1_delay_s + self.rx_window_s > self.rx2_delay_s:
            raise ParameterError("receive windows must be positive and non-overlapping")
        if self.distance_m <= 0:
            raise ParameterError(f"distance_m must be positive, got {self.distance_m}")
        if self.battery_mah <= 0:
            raise ParameterError(f"battery_mah must be positive, got {self.battery_mah}")
        if self.jitter_s is not None and not 0 <= self.jitter_s <= self.period_s:
            raise ParameterError(f"jitter_s must be in [0, period_s], got {self.jitter_s}")

    @property
    def effective_jitter_s(self) -> float:
        return self.period_s if self.jitter_s is None else self.jitter_s


@dataclass(frozen=True)
class NodeState:
    """Dynamic MAC state; immutable so transitions are comparable."""

    phase: Phase = Phase.SLEEP
    fcnt: int = 0  # full (un-wrapped) counter of the current frame
    attempt: int = 0  # transmissions already made for the current frame
    conflict_counter: int = 0  # lifetime count of unacknowledged attempts

    @property
    def wire_fcnt(self) -> int:
        return self.fcnt & 0xFFFF


# Side effects advance() asks the caller to perform.


@dataclass(frozen=True)
class StartTx:
    time: float
    attempt: int  # 1-based transmission number for this frame


@dataclass(frozen=True)
class ScheduleTimer:
    time: float


@dataclass(frozen=True)
class OpenRxWindow:
    window: int  # 1 or 2
    time: float
    duration: float


@dataclass(frozen=True)
class FrameDone:
    """Current frame is finished: acknowledged, or out of attempts."""

    fcnt: int
    delivered: bool


Action = StartTx | ScheduleTimer | OpenRxWindow | FrameDone

BackoffDraw = Callable[[int], float]


def retransmission_delay(attempt: int, uniform_draw: float, max_transmissions: int | None = None) -> float:
    """Linear backoff: uniform in [attempt, 3 * attempt] seconds.

    ``uniform_draw`` is a U[0, 1) sample supplied by the caller so the
    schedule stays reproducible under any RNG layout.
    """
    if attempt < 1:
        raise ParameterError(f"attempt must be >= 1, got {attempt}")
    if max_transmissions is not None and attempt >= max_transmissions:
        raise ParameterError(f"attempt {attempt} has no retransmission (max {max_transmissions})")
    if not 0.0 <= uniform_draw < 1.0:
        raise ParameterError(f"uniform_draw must be in [0, 1), got {uniform_draw}")
    lo = BACKOFF_MIN_FACTOR * attempt
    hi = BACKOFF_MAX_FACTOR * attempt
    return lo + (hi - lo) * uniform_draw


def _violation(state: NodeState, event: MacEvent) -> ProtocolViolation:
    return ProtocolViolation(f"event {event.value} is illegal in phase {state.phase.value}")


def advance(
    state: NodeState,
    config: NodeConfig,
    event: MacEvent,
    now: float,
    draw_backoff: BackoffDraw | None = None,
) -> tuple[NodeState, list[Action]]:
    """One MAC transition.

    ``draw_backoff(attempt)`` must return the retransmission delay in
    seconds; it is only consulted when a confirmed frame needs another
    attempt. Raises ProtocolViolation for events that cannot occur in
    the current phase.
    """
    phase = state.phase

    if phase is Phase.SLEEP:
        if event is MacEvent.TIMER_FIRED:
            # Wake: acquire a measurement, then transmit it.
            return replace(state, phase=Phase.SENSE), [ScheduleTimer(now + config.sense_time_s)]
        raise _violation(state, event)

    if phase is Phase.SENSE:
        if event is MacEvent.TIMER_FIRED:
            return replace(state, phase=Phase.TRANSMIT, attempt=state.attempt + 1), [
                StartTx(now, state.attempt + 1)
            ]
        raise _violation(state, event)

    if phase is Phase.TRANSMIT:
        if event is MacEvent.TX_DONE:
            if not config.confirmed:
                # Fire and forget: the frame is done as soon as it left.
                return (
                    replace(state, phase=Phase.SLEEP, fcnt=state.fcnt + 1, attempt=0),
                    [FrameDone(state.fcnt, delivered=True)],
                )
            return replace(state, phase=Phase.WAIT_RX1), [ScheduleTimer(now + config.rx1_delay_s)]
        raise _violation(state, event)

    if phase is Phase.WAIT_RX1:
        if event is MacEvent.TIMER_FIRED:
            return replace(state, phase=Phase.RX1), [OpenRxWindow(1, now, config.rx_window_s)]
        raise _violation(state, event)

    if phase is Phase.RX1:
        if event is MacEvent.ACK_RECEIVED:
            return _frame_acknowledged(state)
        if event is MacEvent.WINDOW_EMPTY:
            gap = config.rx2_delay_s - config.rx1_delay_s - config.rx_window_s
            return replace(state, phase=Phase.WAIT_RX2), [ScheduleTimer(now + gap)]
        raise _violation(state, event)

    if phase is Phase.WAIT_RX2:
        if event is MacEvent.TIMER_FIRED:
            return replace(state, phase=Phase.RX2), [OpenRxWindow(2, now, config.rx_window_s)]
        raise _violation(state, event)

    if phase is Phase.RX2:
        if event is MacEvent.ACK_RECEIVED:
            return _frame_acknowledged(state)
        if event is MacEvent.WINDOW_EMPTY:
            return _window_pair_failed(state, config, now, draw_backoff)
        raise _violation(state, event)

    if phase is Phase.BACKOFF:
        if event is MacEvent.TIMER_FIRED:
            return replace(state, phase=Phase.TRANSMIT, attempt=state.attempt + 1), [
                StartTx(now, state.attempt + 1)
            ]
        raise _violation(state, event)

    raise _violation(state, event)


def _frame_acknowledged(state: NodeState) -> tuple[NodeState, list[Action]]:
    return (
        replace(state, phase=Phase.SLEEP, fcnt=state.fcnt + 1, attempt=0),
        [FrameDone(state.fcnt, delivered=True)],
    )


def _window_pair_failed(
    state: NodeState,
    config: NodeConfig,
    now: float,
    draw_backoff: BackoffDraw | None,
) -> tuple[NodeState, list[Action]]:
    # Both windows stayed empty: the attempt was not acknowledged.
    bumped = replace(state, conflict_counter=state.conflict_counter + 1)
    if bumped.attempt >= config.max_transmissions:
        return (
            replace(bumped, phase=Phase.SLEEP, fcnt=state.fcnt + 1, attempt=0),
            [FrameDone(state.fcnt, delivered=False)],
        )
    if draw_backoff is None:
        raise ParameterError("draw_backoff is required when a retransmission is due")
    delay = draw_backoff(bumped.attempt)
    if delay <= 0:
        raise ParameterError(f"backoff delay must be positive, got {delay}")
    return replace(bumped, phase=Phase.BACKOFF), [ScheduleTimer(now + delay)]


class DutyBudget:
    """Rolling-window duty cycle ledger (1% per hour by default).

    ``grant(airtime_s, now)`` returns the earliest start time at or
    after ``now`` at which the transmission fits the budget, and records
    the grant. Callers must present requests in non-decreasing ``now``
    order per budget, which lets old entries age out permanently.
    """

    _EPS = 1e-9

    def __init__(self, window_s: float = DUTY_WINDOW_S, max_fraction: float = DUTY_MAX_FRACTION):
        if window_s <= 0:
            raise ParameterError(f"window_s must be positive, got {window_s}")
        if not 0.0 < max_fraction <= 1.0:
            raise ParameterError(f"max_fraction must be in (0, 1], got {max_fraction}")
        self.window_s = window_s
        self.max_fraction = max_fraction
        self._ledger: deque[tuple[float, float]] = deque()  # (start, airtime)
        self._used_s = 0.0

    @property
    def capacity_s(self) -> float:
        return self.window_s * self.max_fraction

    def used_in_window(self, now: float) -> float:
        self._expire(now)
        return self._used_s

    def _expire(self, now: float) -> None:
        ledger = self._ledger
        cutoff = now - self.window_s
        while ledger and ledger[0][0] <= cutoff:
            self._used_s -= ledger.popleft()[1]
        if not ledger:
            self._used_s = 0.0  # cancel float drift at quiet points

    def grant(self, airtime_s: float, now: float) -> float:
        if airtime_s <= 0:
            raise ParameterError(f"airtime_s must be positive, got {airtime_s}")
        if airtime_s > self.capacity_s:
            raise ConfigError(
                f"airtime {airtime_s}s exceeds whole duty budget {self.capacity_s}s"
            )
        self._expire(now)
        start = now
        used = self._used_s
        pending = iter(tuple(self._ledger))
        while used + airtime_s > self.capacity_s + self._EPS:
            # Budget is full: wait for the oldest grant to age out. Deferred
            # grants can leave ledger starts non-monotonic, so never move the
            # start earlier than an already-discounted entry's expiry.
            entry_start, entry_airtime = next(pending)
            used -= entry_airtime
            start = max(start, entry_start + self.window_s)
        self._ledger.append((start, airtime_s))
        self._used_s += airtime_s
        return start
