"""LoRa radio arithmetic: time on air, sensitivity, path loss, link budget.

Timing follows the Semtech modem equations. All durations are derived
with exact rational arithmetic and only converted to float (or integer
microseconds) at the edge, so equal configurations always produce
bit-equal results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import ParameterError

VALID_SPREADING_FACTORS = (7, 8, 9, 10, 11, 12)
VALID_BANDWIDTHS_HZ = (125_000, 250_000, 500_000)
VALID_CODING_RATES = (1, 2, 3, 4)  # cr=k encodes rate 4/(4+k)

# Demodulator SNR limit per spreading factor, dB.
SNR_LIMIT_DB = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}

THERMAL_NOISE_DBM_HZ = -174.0
RECEIVER_NOISE_FIGURE_DB = 6.0

# Transceiver datasheet corner points used for coverage planning.
DEVICE_MAX_TX_POWER_DBM = 20
DEVICE_SENSITIVITY_DBM = -148
FSK_REFERENCE_SENSITIVITY_DBM = -122


@dataclass(frozen=True)
class RadioParams:
    """Static radio configuration of one transmitter.

    ``channel`` is a fixed channel index, or None to let the MAC pick a
    channel uniformly at random for every transmission.
    """

    sf: int = 7
    bw_hz: int = 125_000
    cr: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    tx_power_dbm: float = 14.0
    channel: int | None = None

    def __post_init__(self):
        if self.sf not in VALID_SPREADING_FACTORS:
            raise ParameterError(f"sf must be one of {VALID_SPREADING_FACTORS}, got {self.sf}")
        if self.bw_hz not in VALID_BANDWIDTHS_HZ:
            raise ParameterError(f"bw_hz must be one of {VALID_BANDWIDTHS_HZ}, got {self.bw_hz}")
        if self.cr not in VALID_CODING_RATES:
            raise ParameterError(f"cr must be one of {VALID_CODING_RATES}, got {self.cr}")
        if not isinstance(self.preamble_symbols, int) or self.preamble_symbols < 1:
            raise ParameterError(f"preamble_symbols must be a positive integer, got {self.preamble_symbols}")
        if not self.explicit_header:
            raise ParameterError("implicit header mode is not supported")
        if not -20.0 <= float(self.tx_power_dbm) <= DEVICE_MAX_TX_POWER_DBM:
            raise ParameterError(f"tx_power_dbm out of range [-20, {DEVICE_MAX_TX_POWER_DBM}]: {self.tx_power_dbm}")
        if self.channel is not None and (not isinstance(self.channel, int) or self.channel < 0):
            raise ParameterError(f"channel must be a non-negative index or None, got {self.channel}")

    @property
    def low_data_rate_optimize(self) -> bool:
        # Mandated for symbol times of 16 ms and up.
        return self.bw_hz == 125_000 and self.sf >= 11

    def with_sf(self, sf: int) -> "RadioParams":
        return replace(self, sf=sf)


def symbol_time(params: RadioParams) -> Fraction:
    """Symbol duration in seconds: 2^sf / bw."""
    return Fraction(2**params.sf, params.bw_hz)


def payload_symbols(params: RadioParams, payload_len: int) -> int:
    """Number of payload symbols after the preamble.

    n = 8 + max(ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * (CR + 4), 0)

    with DE the low-data-rate-optimize flag and IH = 0 for explicit headers.
    """
    if not isinstance(payload_len, int) or not 0 <= payload_len <= 255:
        raise ParameterError(f"payload_len must be an integer in [0, 255], got {payload_len}")
    de = 1 if params.low_data_rate_optimize else 0
    crc = 1 if params.crc_on else 0
    ih = 0  # explicit header only; enforced in RadioParams
    numerator = 8 * payload_len - 4 * params.sf + 28 + 16 * crc - 20 * ih
    denominator = 4 * (params.sf - 2 * de)
    n_blocks = -(-numerator // denominator)  # ceil for positive denominator
    return 8 + max(n_blocks * (params.cr + 4), 0)


def time_on_air(params: RadioParams, payload_len: int) -> Fraction:
    """Total frame duration in seconds, exact.

    preamble = (preamble_symbols + 4.25) * t_sym, payload per payload_symbols().
    """
    t_sym = symbol_time(params)
    preamble = (Fraction(params.preamble_symbols) + Fraction(17, 4)) * t_sym
    return preamble + payload_symbols(params, payload_len) * t_sym


def time_on_air_us(params: RadioParams, payload_len: int) -> int:
    """Frame duration in integer microseconds.

    Exact for every valid bandwidth: all symbol times are whole multiples
    of 0.25 us, so the total is an integer count of microseconds.
    """
    us = time_on_air(params, payload_len) * 1_000_000
    if us.denominator != 1:
        raise ParameterError(f"airtime is not a whole microsecond count: {us}")
    return int(us)


def noise_floor_dbm(bw_hz: int) -> float:
    """Receiver noise floor: thermal noise in bw plus the noise figure."""
    if bw_hz not in VALID_BANDWIDTHS_HZ:
        raise ParameterError(f"bw_hz must be one of {VALID_BANDWIDTHS_HZ}, got {bw_hz}")
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bw_hz) + RECEIVER_NOISE_FIGURE_DB


def sensitivity_dbm(sf: int, bw_hz: int) -> float:
    """Demodulation floor: noise floor plus the per-SF SNR limit."""
    if sf not in VALID_SPREADING_FACTORS:
        raise ParameterError(f"sf must be one of {VALID_SPREADING_FACTORS}, got {sf}")
    return noise_floor_dbm(bw_hz) + SNR_LIMIT_DB[sf]


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance propagation with a flat per-link obstruction penalty.

    pl(d) = pl0_db + 10 * exponent * log10(d / d0_m) + wall_penalty_db
    """

    pl0_db: float = 31.2
    d0_m: float = 1.0
    exponent: float = 3.0
    wall_penalty_db: float = 0.0

    def __post_init__(self):
        if self.d0_m <= 0:
            raise ParameterError(f"d0_m must be positive, got {self.d0_m}")
        if self.exponent <= 0:
            raise ParameterError(f"exponent must be positive, got {self.exponent}")
        if self.wall_penalty_db < 0:
            raise ParameterError(f"wall_penalty_db must be non-negative, got {self.wall_penalty_db}")


def path_loss_db(distance_m: float, model: PathLossModel = PathLossModel()) -> float:
    """Path loss in dB at the given link distance."""
    if distance_m < model.d0_m:
        raise ParameterError(f"distance_m must be >= d0_m ({model.d0_m}), got {distance_m}")
    return model.pl0_db + 10.0 * model.exponent * math.log10(distance_m / model.d0_m) + model.wall_penalty_db


def received_power_dbm(tx_power_dbm: float, distance_m: float, model: PathLossModel = PathLossModel()) -> float:
    return tx_power_dbm - path_loss_db(distance_m, model)


def link_margin_db(
    params: RadioParams,
    distance_m: float,
    model: PathLossModel = PathLossModel(),
) -> float:
    """Received power minus the demodulation floor; negative means no link."""
    rx = received_power_dbm(params.tx_power_dbm, distance_m, model)
    return rx - sensitivity_dbm(params.sf, params.bw_hz)


def max_coupling_loss_db(tx_power_dbm: float, sensitivity_floor_dbm: float) -> float:
    """Largest path loss the link closes at: tx power minus sensitivity."""
    return tx_power_dbm - sensitivity_floor_dbm
