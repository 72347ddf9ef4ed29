"""Charge accounting and battery lifetime estimation.

A node's consumption is modeled as piecewise-constant current segments:
deep sleep, MCU-active sensing (MCU run plus analog front end), radio
transmit, and radio receive. Charge is integrated per segment in mA*s;
average current over a reporting period then fixes the lifetime for a
given battery capacity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ParameterError

HOURS_PER_DAY = 24.0

# Linear display model for the battery gauge byte sent in telemetry:
# full charge reads 4200 mV, exhausted reads 3000 mV.
BATTERY_FULL_MV = 4200
BATTERY_EMPTY_MV = 3000


class NodeActivity(enum.Enum):
    SLEEP = "sleep"
    RUN = "run"  # MCU active with the sensor front end powered
    TX = "tx"
    RX = "rx"


@dataclass(frozen=True)
class EnergyProfile:
    """Current draw per activity, at the nominal supply voltage."""

    sleep_ua: float = 4.0
    mcu_run_ma: float = 8.25
    analog_ma: float = 2.0
    tx_ma: float = 76.0
    rx_ma: float = 11.0
    supply_v: float = 3.0

    def __post_init__(self):
        for name in ("sleep_ua", "mcu_run_ma", "analog_ma", "tx_ma", "rx_ma", "supply_v"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        sleep_ma = self.sleep_ua / 1000.0
        for name, value in (
            ("mcu_run_ma", self.mcu_run_ma),
            ("tx_ma", self.tx_ma),
            ("rx_ma", self.rx_ma),
        ):
            if value <= sleep_ma:
                raise ParameterError(f"{name} ({value} mA) must exceed sleep current ({sleep_ma} mA)")

    def current_ma(self, activity: NodeActivity) -> float:
        if activity is NodeActivity.SLEEP:
            return self.sleep_ua / 1000.0
        if activity is NodeActivity.RUN:
            return self.mcu_run_ma + self.analog_ma
        if activity is NodeActivity.TX:
            return self.tx_ma
        if activity is NodeActivity.RX:
            return self.rx_ma
        raise ParameterError(f"unknown activity {activity!r}")


Segment = tuple[NodeActivity, float]


def _check_segments(segments: Sequence[Segment]) -> None:
    if not segments:
        raise ParameterError("cycle trace must contain at least one segment")
    for activity, duration in segments:
        if not isinstance(activity, NodeActivity):
            raise ParameterError(f"unknown activity {activity!r}")
        if duration <= 0:
            raise ParameterError(f"segment durations must be positive, got {duration}")


def cycle_charge_mas(profile: EnergyProfile, segments: Sequence[Segment]) -> float:
    """Charge consumed over the trace, in mA*s."""
    _check_segments(segments)
    return sum(profile.current_ma(activity) * duration for activity, duration in segments)


def average_current_ua(profile: EnergyProfile, segments: Sequence[Segment]) -> float:
    """Mean current over the trace, in uA."""
    _check_segments(segments)
    total = sum(duration for _, duration in segments)
    return cycle_charge_mas(profile, segments) / total * 1000.0


def reporting_cycle(
    airtime_s: float,
    period_s: float,
    sense_time_s: float = 0.050,
    rx_window_s: float = 0.030,
    rx_windows: int = 2,
) -> list[Segment]:
    """One uneventful reporting period: sense, transmit once, listen, sleep."""
    if airtime_s <= 0:
        raise ParameterError(f"airtime_s must be positive, got {airtime_s}")
    active = sense_time_s + airtime_s + rx_windows * rx_window_s
    if period_s <= active:
        raise ParameterError(f"period_s ({period_s}) must exceed active time ({active})")
    segments: list[Segment] = [(NodeActivity.RUN, sense_time_s), (NodeActivity.TX, airtime_s)]
    segments += [(NodeActivity.RX, rx_window_s)] * rx_windows
    segments.append((NodeActivity.SLEEP, period_s - active))
    return segments


def lifetime_days(battery_mah: float, avg_current_ua: float, derating: float = 1.0) -> float:
    """Days until the battery is spent at the given mean draw.

    ``derating`` scales the nameplate capacity for self-discharge and
    cold-aisle temperature effects (1.0 = take capacity at face value).
    """
    if battery_mah <= 0:
        raise ParameterError(f"battery_mah must be positive, got {battery_mah}")
    if avg_current_ua <= 0:
        raise ParameterError(f"avg_current_ua must be positive, got {avg_current_ua}")
    if not 0.0 < derating <= 1.0:
        raise ParameterError(f"derating must be in (0, 1], got {derating}")
    hours = battery_mah * derating * 1000.0 / avg_current_ua
    return hours / HOURS_PER_DAY


def battery_voltage_mv(consumed_mas: float, battery_mah: float) -> int:
    """Telemetry gauge reading for a given consumed charge.

    Linear from 4200 mV (full) down to 3000 mV (empty), clamped at the
    bottom. Uses round-half-up so results match the compiled engine.
    """
    if battery_mah <= 0:
        raise ParameterError(f"battery_mah must be positive, got {battery_mah}")
    if consumed_mas < 0:
        raise ParameterError(f"consumed_mas must be non-negative, got {consumed_mas}")
    capacity_mas = battery_mah * 3600.0
    volts = BATTERY_FULL_MV - (BATTERY_FULL_MV - BATTERY_EMPTY_MV) * (consumed_mas / capacity_mas)
    if volts < BATTERY_EMPTY_MV:
        volts = float(BATTERY_EMPTY_MV)
    return int(volts + 0.5)


def total_charge_mah(profile: EnergyProfile, cycles: Iterable[Sequence[Segment]]) -> float:
    """Accumulated charge over many traces, in mAh."""
    return sum(cycle_charge_mas(profile, trace) for trace in cycles) / 3600.0
