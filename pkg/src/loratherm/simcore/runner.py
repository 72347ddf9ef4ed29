"""Run orchestration: engine invocation, statistics, stream emission.

``run_scenario`` prepares deterministic inputs, hands them to the
selected engine, and wraps the raw outputs in ``ScenarioStats`` (the
run-level summary) and ``SimulationResult`` (summary plus buffers,
gateway-stream and event-log emission).
"""

from __future__ import annotations

import base64
import heapq
import json
import time
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Iterator

import numpy as np

from ..codec import SensorPayload, encode_frame
from ..energy import battery_voltage_mv, lifetime_days
from ..errors import ConfigError
from ..phy import PathLossModel, noise_floor_dbm, path_loss_db
from .backend import get_engine
from .data import (
    EngineOutputs,
    OUTCOME_ABORTED,
    OUTCOME_BELOW_SENSITIVITY,
    OUTCOME_COLLIDED,
    OUTCOME_DELIVERED,
    build_engine_inputs,
)
from .scenario import Scenario

OUTCOME_NAMES = {
    OUTCOME_DELIVERED: "delivered",
    OUTCOME_COLLIDED: "collided",
    OUTCOME_BELOW_SENSITIVITY: "below_sensitivity",
    OUTCOME_ABORTED: "aborted",
}


@dataclass(frozen=True)
class NodeStats:
    dev_addr: int
    measurements: int
    delivered_unique: int
    given_up: int
    conflict_counter: int
    resets: int
    avg_current_ua: float
    consumed_mah: float
    battery_mv: int
    battery_mah: float

    def lifetime_days(self) -> float:
        return lifetime_days(self.battery_mah, self.avg_current_ua)


@dataclass(frozen=True)
class ScenarioStats:
    """Deterministic summary of one run; contains no wall-clock data."""

    scenario_hash: str
    seed: int
    backend: str
    n_nodes: int
    duration_s: float
    measurements_taken: int
    tx_attempts: int
    delivered: int
    collided: int
    below_sensitivity: int
    conflict_ratio: float
    duplicates_suppressed: int
    given_up: int
    points_collected: int
    continuity_gaps: int
    skipped_busy: int
    deferred: int
    aborted: int
    duty_wait_s: float
    avg_current_ua: float
    est_lifetime_days: float
    nodes: tuple[NodeStats, ...] = field(repr=False)

    def to_dict(self) -> dict:
        d = {
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "backend": self.backend,
            "n_nodes": self.n_nodes,
            "duration_s": self.duration_s,
            "measurements_taken": self.measurements_taken,
            "tx_attempts": self.tx_attempts,
            "delivered": self.delivered,
            "collided": self.collided,
            "below_sensitivity": self.below_sensitivity,
            "conflict_ratio": self.conflict_ratio,
            "duplicates_suppressed": self.duplicates_suppressed,
            "given_up": self.given_up,
            "points_collected": self.points_collected,
            "continuity_gaps": self.continuity_gaps,
            "skipped_busy": self.skipped_busy,
            "deferred": self.deferred,
            "aborted": self.aborted,
            "duty_wait_s": self.duty_wait_s,
            "avg_current_ua": self.avg_current_ua,
            "est_lifetime_days": self.est_lifetime_days,
            "per_node": [
                {
                    "dev_addr": ns.dev_addr,
                    "measurements": ns.measurements,
                    "delivered_unique": ns.delivered_unique,
                    "given_up": ns.given_up,
                    "conflict_counter": ns.conflict_counter,
                    "resets": ns.resets,
                    "avg_current_ua": round(ns.avg_current_ua, 6),
                    "consumed_mah": round(ns.consumed_mah, 9),
                    "battery_mv": ns.battery_mv,
                }
                for ns in self.nodes
            ],
        }
        return d

    def format_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_csv(self) -> str:
        lines = ["key,value"]
        for key, value in self.to_dict().items():
            if key == "per_node":
                continue
            lines.append(f"{key},{value}")
        return "\n".join(lines) + "\n"

    def format_text(self) -> str:
        rows = [
            ("scenario", self.scenario_hash),
            ("seed", self.seed),
            ("backend", self.backend),
            ("nodes", self.n_nodes),
            ("duration_s", f"{self.duration_s:.0f}"),
            ("measurements_taken", self.measurements_taken),
            ("tx_attempts", self.tx_attempts),
            ("delivered", self.delivered),
            ("collided", self.collided),
            ("below_sensitivity", self.below_sensitivity),
            ("conflict_ratio", f"{self.conflict_ratio:.6f}"),
            ("conflict_pct", f"{100.0 * self.conflict_ratio:.4f}"),
            ("duplicates_suppressed", self.duplicates_suppressed),
            ("given_up", self.given_up),
            ("points_collected", self.points_collected),
            ("continuity_gaps", self.continuity_gaps),
            ("skipped_busy", self.skipped_busy),
            ("deferred", self.deferred),
            ("aborted", self.aborted),
            ("duty_wait_s", f"{self.duty_wait_s:.6f}"),
            ("avg_current_ua", f"{self.avg_current_ua:.3f}"),
            ("est_lifetime_days", f"{self.est_lifetime_days:.2f}"),
        ]
        width = max(len(k) for k, _ in rows)
        out = [f"{k:<{width}}  {v}" for k, v in rows]
        out.append("")
        out.append(
            "dev_addr    meas     points   given_up conflicts resets avg_ua    batt_mv"
        )
        for ns in self.nodes:
            out.append(
                f"{ns.dev_addr:08x}  {ns.measurements:<8d} {ns.delivered_unique:<8d} "
                f"{ns.given_up:<8d} {ns.conflict_counter:<9d} {ns.resets:<6d} "
                f"{ns.avg_current_ua:<9.3f} {ns.battery_mv}"
            )
        return "\n".join(out) + "\n"


def _count_gap_runs(out: EngineOutputs, n_nodes: int) -> int:
    """Number of maximal runs of consecutive lost frame counters."""
    runs = 0
    for i in range(n_nodes):
        mask = out.gu_node == i
        if not mask.any():
            continue
        fcnts = np.sort(out.gu_fcnt[mask].astype(np.int64))
        runs += 1 + int(np.count_nonzero(np.diff(fcnts) > 1))
    return runs


def compute_stats(scenario: Scenario, out: EngineOutputs, backend: str) -> ScenarioStats:
    n = scenario.n_nodes
    duration = scenario.duration_s
    sleep_ma = scenario.energy.sleep_ua / 1000.0

    nodes = []
    currents = []
    lifetimes = []
    for i, node in enumerate(scenario.nodes):
        sleep_s = duration - float(out.node_active_s_within[i])
        consumed_mas = float(out.node_active_charge_mas[i]) + sleep_ma * sleep_s
        avg_ua = consumed_mas / duration * 1000.0
        currents.append(avg_ua)
        lifetimes.append(lifetime_days(node.battery_mah, avg_ua))
        nodes.append(
            NodeStats(
                dev_addr=node.dev_addr,
                measurements=int(out.node_measurements[i]),
                delivered_unique=int(out.node_delivered_unique[i]),
                given_up=int(out.node_given_up[i]),
                conflict_counter=int(out.node_conflicts[i]),
                resets=int(out.node_resets[i]),
                avg_current_ua=avg_ua,
                consumed_mah=consumed_mas / 3600.0,
                battery_mv=battery_voltage_mv(consumed_mas, node.battery_mah),
                battery_mah=node.battery_mah,
            )
        )

    conflict_ratio = out.collided / out.tx_attempts if out.tx_attempts else 0.0
    return ScenarioStats(
        scenario_hash=scenario.scenario_hash(),
        seed=scenario.seed,
        backend=backend,
        n_nodes=n,
        duration_s=duration,
        measurements_taken=out.measurements_taken,
        tx_attempts=out.tx_attempts,
        delivered=out.delivered,
        collided=out.collided,
        below_sensitivity=out.below_sensitivity,
        conflict_ratio=conflict_ratio,
        duplicates_suppressed=out.duplicates_suppressed,
        given_up=out.given_up,
        points_collected=int(np.sum(out.node_delivered_unique)),
        continuity_gaps=_count_gap_runs(out, n),
        skipped_busy=out.skipped_busy,
        deferred=out.deferred,
        aborted=out.aborted,
        duty_wait_s=out.duty_wait_s,
        avg_current_ua=float(np.mean(currents)),
        est_lifetime_days=float(min(lifetimes)),
        nodes=tuple(nodes),
    )


@dataclass
class SimulationResult:
    scenario: Scenario
    stats: ScenarioStats
    outputs: EngineOutputs
    backend: str
    elapsed_s: float

    def _node_line_prefixes(self) -> list[tuple[str, str, int, int]]:
        """Per node: rssi text, snr text, sf, dev_addr.

        Received power is static per node in this propagation model, so
        the presentation fields are too.
        """
        rows = []
        for node in self.scenario.nodes:
            model = self.scenario.path_loss
            if node.wall_penalty_db:
                model = PathLossModel(
                    pl0_db=model.pl0_db,
                    d0_m=model.d0_m,
                    exponent=model.exponent,
                    wall_penalty_db=model.wall_penalty_db + node.wall_penalty_db,
                )
            rx = node.radio.tx_power_dbm - path_loss_db(node.distance_m, model)
            snr = rx - noise_floor_dbm(node.radio.bw_hz)
            rows.append((str(int(round(rx))), f"{snr:.1f}", node.radio.sf, node.dev_addr))
        return rows

    def _timestamp(self, offset_s: float) -> str:
        dt = self.scenario.epoch + timedelta(seconds=float(offset_s))
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"

    def _frame_builder(self):
        """Time-ordered frame lookup keyed by (node, fcnt).

        Frame counters restart after an injected reset, so the mapping
        is maintained as a cursor over the measurement buffer: a frame
        is built from the most recent measurement with that counter at
        the delivery's point in time.
        """
        out = self.outputs
        if out.meas_node is None:
            raise ConfigError("run was executed without measurement collection", "stream")
        keys = self.scenario.device_keys()
        node_key = [keys[node.dev_addr] for node in self.scenario.nodes]
        confirmed = [node.confirmed for node in self.scenario.nodes]
        dev_addr = [node.dev_addr for node in self.scenario.nodes]

        meas_node = out.meas_node
        meas_fcnt = out.meas_fcnt
        meas_time = out.meas_time
        meas_temp = out.meas_temp
        meas_rh = out.meas_rh
        meas_mv = out.meas_mv
        meas_conf = out.meas_conflicts
        total = len(meas_node)
        cursor = 0
        values: dict[tuple[int, int], tuple] = {}
        cache: dict[tuple[int, int], bytes] = {}

        def frame_at(node: int, fcnt: int, when: float) -> bytes:
            nonlocal cursor
            while cursor < total and meas_time[cursor] <= when:
                key = (int(meas_node[cursor]), int(meas_fcnt[cursor]))
                values[key] = (
                    int(meas_temp[cursor]),
                    int(meas_rh[cursor]),
                    int(meas_mv[cursor]),
                    int(meas_conf[cursor]),
                )
                cache.pop(key, None)
                cursor += 1
            key = (node, fcnt)
            frame = cache.get(key)
            if frame is None:
                temp, rh, mv, conf = values[key]
                payload = SensorPayload(temp, rh, mv, conf)
                frame = encode_frame(
                    payload, dev_addr[node], fcnt, node_key[node], confirmed=confirmed[node]
                )
                cache[key] = frame
            return frame

        return frame_at

    def iter_gateway_lines(self) -> Iterator[str]:
        """Delivered uplinks in arrival order, one line each."""
        out = self.outputs
        if out.del_time is None:
            raise ConfigError("run was executed without delivery collection", "stream")
        frame_at = self._frame_builder()
        prefixes = self._node_line_prefixes()
        b64 = base64.b64encode
        for k in range(len(out.del_time)):
            node = int(out.del_node[k])
            fcnt = int(out.del_fcnt[k])
            when = float(out.del_time[k])
            rssi, snr, sf, _ = prefixes[node]
            frame = frame_at(node, fcnt, when)
            yield (
                f"ts={self._timestamp(when)} rssi={rssi} snr={snr} "
                f"chan={int(out.del_chan[k])} sf={sf} frame={b64(frame).decode()}"
            )

    def write_stream(self, path: str) -> int:
        count = 0
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.iter_gateway_lines():
                fh.write(line)
                fh.write("\n")
                count += 1
        return count

    def iter_event_lines(self) -> Iterator[str]:
        """Attempt outcomes and abandoned frames, time-ordered.

        Delivered-attempt lines carry the full gateway line fields, so
        an event log can be replayed through the collector; other lines
        lack a frame and count as malformed there by design.
        """
        out = self.outputs
        if out.att_start is None:
            raise ConfigError("run was executed without attempt collection", "event log")
        frame_at = self._frame_builder()
        prefixes = self._node_line_prefixes()

        def attempt_lines():
            for k in range(len(out.att_end)):
                node = int(out.att_node[k])
                when = float(out.att_end[k])
                outcome = OUTCOME_NAMES[int(out.att_outcome[k])]
                rssi, snr, sf, addr = prefixes[node]
                base = (
                    f"ts={self._timestamp(when)} ev=tx node={addr:08x} "
                    f"fcnt={int(out.att_fcnt[k])} attempt={int(out.att_no[k])} "
                    f"chan={int(out.att_chan[k])} sf={sf} outcome={outcome}"
                )
                if out.att_outcome[k] == OUTCOME_DELIVERED:
                    frame = frame_at(node, int(out.att_fcnt[k]), when)
                    base += (
                        f" rssi={rssi} snr={snr} frame={base64.b64encode(frame).decode()}"
                    )
                yield when, base

        def drop_lines():
            for k in range(len(out.gu_time)):
                node = int(out.gu_node[k])
                when = float(out.gu_time[k])
                addr = prefixes[node][3]
                yield when, (
                    f"ts={self._timestamp(when)} ev=drop node={addr:08x} "
                    f"fcnt={int(out.gu_fcnt[k])}"
                )

        for _, line in heapq.merge(attempt_lines(), drop_lines(), key=lambda x: x[0]):
            yield line

    def write_event_log(self, path: str) -> int:
        count = 0
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.iter_event_lines():
                fh.write(line)
                fh.write("\n")
                count += 1
        return count


def run_scenario(
    scenario: Scenario,
    backend: str | None = None,
    collect_measurements: bool = False,
    collect_deliveries: bool = False,
    collect_attempts: bool = False,
) -> SimulationResult:
    engine = get_engine(backend)
    inputs = build_engine_inputs(
        scenario,
        collect_measurements=collect_measurements,
        collect_deliveries=collect_deliveries,
        collect_attempts=collect_attempts,
    )
    cap = inputs.duty_capacity_s
    for i in range(inputs.n_nodes):
        if inputs.airtime[i] > cap:
            raise ConfigError(
                f"node {i} airtime {inputs.airtime[i]:.6f}s exceeds duty budget {cap:.1f}s",
                "duty",
            )
    started = time.perf_counter()
    outputs = engine.run(inputs)
    elapsed = time.perf_counter() - started
    stats = compute_stats(scenario, outputs, engine.name)
    return SimulationResult(
        scenario=scenario,
        stats=stats,
        outputs=outputs,
        backend=engine.name,
        elapsed_s=elapsed,
    )
