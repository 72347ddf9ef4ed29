"""Engine input/output containers and the input builder.

Both event engines (pure Python and compiled) consume the same
pre-computed arrays and random substreams, so a run's outcome depends
only on the scenario, never on which engine executed it. Randomness is
drawn from per-(seed, node, purpose) substreams; bulk arrays cover the
expected demand and the per-node generators continue the same sequence
when an engine needs more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..phy import PathLossModel, path_loss_db, sensitivity_dbm, time_on_air
from ..codec import FRAME_LEN
from .scenario import Scenario

# Substream purposes; part of the RNG contract, do not renumber.
STREAM_JITTER = 0
STREAM_CHANNEL = 1
STREAM_TEMP = 2
STREAM_RH = 3
STREAM_BACKOFF = 4
STREAM_ACK = 5

SECONDS_PER_DAY = 86400.0
RH_PHASE_RAD = math.pi / 3.0

# Attempt outcome codes shared by engines, buffers, and the event log.
# ABORTED only appears in logs, for attempts cut short by a reboot.
OUTCOME_DELIVERED = 0
OUTCOME_COLLIDED = 1
OUTCOME_BELOW_SENSITIVITY = 2
OUTCOME_ABORTED = 3


def node_stream(seed: int, node_index: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, node_index, purpose))))


@dataclass
class EngineInputs:
    n_nodes: int
    duration_s: float
    channels: int
    capture_db: float
    ack_loss_prob: float
    duty_window_s: float
    duty_capacity_s: float
    sleep_ma: float
    run_ma: float
    tx_ma: float
    rx_ma: float
    # Per-node scalars (numpy arrays of length n_nodes).
    period: np.ndarray
    airtime: np.ndarray
    sense: np.ndarray
    rx1_delay: np.ndarray
    rx2_delay: np.ndarray
    rx_window: np.ndarray
    rx_power: np.ndarray
    floor: np.ndarray
    sf: np.ndarray  # int64
    confirmed: np.ndarray  # uint8
    max_tx: np.ndarray  # int64
    fixed_chan: np.ndarray  # int64, -1 = hop over all channels
    battery_mas: np.ndarray
    n_slots: np.ndarray  # int64
    # Per-node pre-drawn arrays.
    jitter: list[np.ndarray]  # float64, wake offset per slot
    chan_bulk: list[np.ndarray | None]  # uint8 channel picks, None when fixed
    temp_centi: list[np.ndarray]  # int16 per slot
    rh_centi: list[np.ndarray]  # uint16 per slot
    # Per-node generators that continue the bulk sequences.
    chan_gen: list[np.random.Generator]
    backoff_gen: list[np.random.Generator]
    ack_gen: list[np.random.Generator]
    # Injected resets, sorted by time: (time_s, node_index).
    reboots: list[tuple[float, int]] = field(default_factory=list)
    collect_measurements: bool = False
    collect_deliveries: bool = False
    collect_attempts: bool = False


@dataclass
class EngineOutputs:
    # Run-level counters.
    tx_attempts: int = 0
    delivered: int = 0
    collided: int = 0
    below_sensitivity: int = 0
    duplicates_suppressed: int = 0
    given_up: int = 0
    measurements_taken: int = 0
    skipped_busy: int = 0
    deferred: int = 0
    aborted: int = 0
    duty_wait_s: float = 0.0
    # Per-node arrays (int64 / float64 of length n_nodes).
    node_conflicts: np.ndarray | None = None
    node_delivered_unique: np.ndarray | None = None
    node_given_up: np.ndarray | None = None
    node_measurements: np.ndarray | None = None
    node_resets: np.ndarray | None = None
    node_active_charge_mas: np.ndarray | None = None
    node_active_s_within: np.ndarray | None = None
    node_active_s_total: np.ndarray | None = None
    # Measurement buffer (when collect_measurements).
    meas_node: np.ndarray | None = None
    meas_fcnt: np.ndarray | None = None
    meas_slot: np.ndarray | None = None
    meas_time: np.ndarray | None = None
    meas_temp: np.ndarray | None = None
    meas_rh: np.ndarray | None = None
    meas_mv: np.ndarray | None = None
    meas_conflicts: np.ndarray | None = None
    # Delivery buffer (when collect_deliveries).
    del_time: np.ndarray | None = None
    del_node: np.ndarray | None = None
    del_fcnt: np.ndarray | None = None
    del_attempt: np.ndarray | None = None
    del_chan: np.ndarray | None = None
    del_dup: np.ndarray | None = None
    # Attempt buffer (when collect_attempts).
    att_start: np.ndarray | None = None
    att_end: np.ndarray | None = None
    att_node: np.ndarray | None = None
    att_fcnt: np.ndarray | None = None
    att_no: np.ndarray | None = None
    att_chan: np.ndarray | None = None
    att_outcome: np.ndarray | None = None
    # Abandoned frames, always collected: (time, node, fcnt).
    gu_time: np.ndarray | None = None
    gu_node: np.ndarray | None = None
    gu_fcnt: np.ndarray | None = None


def build_engine_inputs(
    scenario: Scenario,
    collect_measurements: bool = False,
    collect_deliveries: bool = False,
    collect_attempts: bool = False,
) -> EngineInputs:
    n = scenario.n_nodes
    nodes = scenario.nodes
    seed = scenario.seed

    period = np.array([node.period_s for node in nodes], dtype=np.float64)
    airtime = np.array(
        [float(time_on_air(node.radio, FRAME_LEN)) for node in nodes], dtype=np.float64
    )
    sense = np.array([node.sense_time_s for node in nodes], dtype=np.float64)
    rx1_delay = np.array([node.rx1_delay_s for node in nodes], dtype=np.float64)
    rx2_delay = np.array([node.rx2_delay_s for node in nodes], dtype=np.float64)
    rx_window = np.array([node.rx_window_s for node in nodes], dtype=np.float64)
    sf = np.array([node.radio.sf for node in nodes], dtype=np.int64)
    confirmed = np.array([1 if node.confirmed else 0 for node in nodes], dtype=np.uint8)
    max_tx = np.array([node.max_transmissions for node in nodes], dtype=np.int64)
    fixed_chan = np.array(
        [-1 if node.radio.channel is None else node.radio.channel for node in nodes],
        dtype=np.int64,
    )
    battery_mas = np.array([node.battery_mah * 3600.0 for node in nodes], dtype=np.float64)
    n_slots = np.array(
        [math.ceil(scenario.duration_s / node.period_s) for node in nodes], dtype=np.int64
    )

    rx_power = np.empty(n, dtype=np.float64)
    floor = np.empty(n, dtype=np.float64)
    for i, node in enumerate(nodes):
        model = scenario.path_loss
        if node.wall_penalty_db:
            model = PathLossModel(
                pl0_db=model.pl0_db,
                d0_m=model.d0_m,
                exponent=model.exponent,
                wall_penalty_db=model.wall_penalty_db + node.wall_penalty_db,
            )
        rx_power[i] = node.radio.tx_power_dbm - path_loss_db(node.distance_m, model)
        floor[i] = sensitivity_dbm(node.radio.sf, node.radio.bw_hz)

    sensor = scenario.sensor
    jitter: list[np.ndarray] = []
    chan_bulk: list[np.ndarray | None] = []
    temp_centi: list[np.ndarray] = []
    rh_centi: list[np.ndarray] = []
    chan_gen: list[np.random.Generator] = []
    backoff_gen: list[np.random.Generator] = []
    ack_gen: list[np.random.Generator] = []

    for i, node in enumerate(nodes):
        slots = int(n_slots[i])
        bound = node.effective_jitter_s
        jit = node_stream(seed, i, STREAM_JITTER).random(slots) * bound
        jitter.append(jit)

        gen = node_stream(seed, i, STREAM_CHANNEL)
        if fixed_chan[i] >= 0:
            chan_bulk.append(None)
        else:
            slack = max(64, slots // 16)
            chan_bulk.append(
                gen.integers(0, scenario.channels, size=slots + slack, dtype=np.uint8)
            )
        chan_gen.append(gen)

        t_nominal = np.arange(slots, dtype=np.float64) * node.period_s
        angle = 2.0 * math.pi * ((t_nominal % SECONDS_PER_DAY) / SECONDS_PER_DAY)
        temps = (
            sensor.base_temp_c
            + sensor.daily_swing_c * np.sin(angle)
            + sensor.temp_noise_c * node_stream(seed, i, STREAM_TEMP).standard_normal(slots)
        )
        temp_centi.append(
            np.clip(np.rint(temps * 100.0), -32768, 32767).astype(np.int16)
        )
        rhs = (
            sensor.base_rh_pct
            + sensor.daily_swing_rh_pct * np.sin(angle + RH_PHASE_RAD)
            + sensor.rh_noise_pct * node_stream(seed, i, STREAM_RH).standard_normal(slots)
        )
        rh_centi.append(np.clip(np.rint(rhs * 100.0), 0, 10000).astype(np.uint16))

        backoff_gen.append(node_stream(seed, i, STREAM_BACKOFF))
        ack_gen.append(node_stream(seed, i, STREAM_ACK))

    return EngineInputs(
        n_nodes=n,
        duration_s=scenario.duration_s,
        channels=scenario.channels,
        capture_db=scenario.capture_threshold_db,
        ack_loss_prob=scenario.ack_loss_prob,
        duty_window_s=scenario.duty_window_s,
        duty_capacity_s=scenario.duty_window_s * scenario.duty_max_fraction,
        sleep_ma=scenario.energy.sleep_ua / 1000.0,
        run_ma=scenario.energy.mcu_run_ma + scenario.energy.analog_ma,
        tx_ma=scenario.energy.tx_ma,
        rx_ma=scenario.energy.rx_ma,
        period=period,
        airtime=airtime,
        sense=sense,
        rx1_delay=rx1_delay,
        rx2_delay=rx2_delay,
        rx_window=rx_window,
        rx_power=rx_power,
        floor=floor,
        sf=sf,
        confirmed=confirmed,
        max_tx=max_tx,
        fixed_chan=fixed_chan,
        battery_mas=battery_mas,
        n_slots=n_slots,
        jitter=jitter,
        chan_bulk=chan_bulk,
        temp_centi=temp_centi,
        rh_centi=rh_centi,
        chan_gen=chan_gen,
        backoff_gen=backoff_gen,
        ack_gen=ack_gen,
        reboots=[(r.time_s, r.node) for r in scenario.reboots],
        collect_measurements=collect_measurements,
        collect_deliveries=collect_deliveries,
        collect_attempts=collect_attempts,
    )
