"""Scenario configuration: defaults, file loading, validation, hashing.

A scenario file (YAML) is the single source of truth for a run; CLI
flags only override entries in it. Every knob has a default, so an
empty file (or none at all) describes the reference deployment: twenty
nodes reporting every 30 s on SF7 over eight channels for thirty days.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping

import yaml

from ..codec import FRAME_LEN, derive_device_key
from ..energy import EnergyProfile
from ..errors import ConfigError, ParameterError
from ..mac import DUTY_MAX_FRACTION, DUTY_WINDOW_S, NodeConfig
from ..phy import PathLossModel, RadioParams, sensitivity_dbm, time_on_air

DEFAULT_N_NODES = 20
DEFAULT_CHANNELS = 8
DEFAULT_DURATION_S = 30 * 86400.0
DEFAULT_EPOCH = "2018-03-01T00:00:00Z"
DEFAULT_ROOT_KEY_HEX = "000102030405060708090a0b0c0d0e0f"
DEV_ADDR_BASE = 0x01000001


@dataclass(frozen=True)
class SensorModel:
    """Synthetic measurement generator: daily sine plus Gaussian noise."""

    base_temp_c: float = 26.0
    daily_swing_c: float = 3.0
    temp_noise_c: float = 0.2
    base_rh_pct: float = 40.0
    daily_swing_rh_pct: float = 5.0
    rh_noise_pct: float = 1.0

    def __post_init__(self):
        if self.temp_noise_c < 0 or self.rh_noise_pct < 0:
            raise ParameterError("noise deviations must be non-negative")


@dataclass(frozen=True)
class Reboot:
    """Injected device reset: counters clear, battery state persists."""

    node: int
    time_s: float


@dataclass(frozen=True)
class Scenario:
    seed: int = 1
    duration_s: float = DEFAULT_DURATION_S
    channels: int = DEFAULT_CHANNELS
    capture_threshold_db: float = 6.0
    ack_loss_prob: float = 0.0
    epoch: datetime = field(
        default_factory=lambda: datetime(2018, 3, 1, tzinfo=timezone.utc)
    )
    root_key: bytes = bytes.fromhex(DEFAULT_ROOT_KEY_HEX)
    path_loss: PathLossModel = PathLossModel()
    energy: EnergyProfile = EnergyProfile()
    sensor: SensorModel = SensorModel()
    duty_window_s: float = DUTY_WINDOW_S
    duty_max_fraction: float = DUTY_MAX_FRACTION
    nodes: tuple[NodeConfig, ...] = ()
    reboots: tuple[Reboot, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_slots(self, idx: int) -> int:
        """Number of reporting slots the node can start within the run."""
        return math.ceil(self.duration_s / self.nodes[idx].period_s)

    def node_airtime_s(self, idx: int) -> float:
        """Uplink airtime for this node's radio settings, seconds."""
        return float(time_on_air(self.nodes[idx].radio, FRAME_LEN))

    def device_keys(self) -> dict[int, bytes]:
        return {n.dev_addr: derive_device_key(self.root_key, n.dev_addr) for n in self.nodes}

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "channels": self.channels,
            "capture_threshold_db": self.capture_threshold_db,
            "ack_loss_prob": self.ack_loss_prob,
            "epoch": _format_iso(self.epoch),
            "root_key_hex": self.root_key.hex(),
            "path_loss": asdict(self.path_loss),
            "energy": asdict(self.energy),
            "sensor": asdict(self.sensor),
            "duty": {"window_s": self.duty_window_s, "max_fraction": self.duty_max_fraction},
            "nodes": [_node_to_dict(n) for n in self.nodes],
            "reboots": [{"node": r.node, "time_s": r.time_s} for r in self.reboots],
        }
        return d

    def scenario_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _format_iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _node_to_dict(n: NodeConfig) -> dict[str, Any]:
    return {
        "dev_addr": n.dev_addr,
        "period_s": n.period_s,
        "confirmed": n.confirmed,
        "max_transmissions": n.max_transmissions,
        "sense_time_s": n.sense_time_s,
        "rx1_delay_s": n.rx1_delay_s,
        "rx2_delay_s": n.rx2_delay_s,
        "rx_window_s": n.rx_window_s,
        "distance_m": n.distance_m,
        "wall_penalty_db": n.wall_penalty_db,
        "battery_mah": n.battery_mah,
        "jitter_s": n.jitter_s,
        "sf": n.radio.sf,
        "bw_hz": n.radio.bw_hz,
        "cr": n.radio.cr,
        "preamble_symbols": n.radio.preamble_symbols,
        "tx_power_dbm": n.radio.tx_power_dbm,
        "channel": n.radio.channel,
    }


_NODE_KEYS = {
    "dev_addr", "period_s", "confirmed", "max_transmissions", "sense_time_s",
    "rx1_delay_s", "rx2_delay_s", "rx_window_s", "distance_m", "wall_penalty_db",
    "battery_mah", "jitter_s", "sf", "bw_hz", "cr", "preamble_symbols",
    "tx_power_dbm", "channel",
}

_TOP_KEYS = {
    "seed", "duration_s", "channels", "capture_threshold_db", "ack_loss_prob",
    "epoch", "root_key_hex", "path_loss", "energy", "sensor", "duty",
    "n_nodes", "node_defaults", "nodes", "reboots",
}


def _require_mapping(value: Any, key: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError("expected a mapping", key)
    return dict(value)


def _check_keys(d: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", where)


def _number(d: Mapping, key: str, default: float, where: str, lo=None, hi=None) -> float:
    value = d.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", f"{where}.{key}")
    value = float(value)
    if lo is not None and value < lo:
        raise ConfigError(f"must be >= {lo}, got {value}", f"{where}.{key}")
    if hi is not None and value > hi:
        raise ConfigError(f"must be <= {hi}, got {value}", f"{where}.{key}")
    return value


def _integer(d: Mapping, key: str, default: int, where: str, lo=None) -> int:
    value = d.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer", f"{where}.{key}")
    if lo is not None and value < lo:
        raise ConfigError(f"must be >= {lo}, got {value}", f"{where}.{key}")
    return value


def _boolean(d: Mapping, key: str, default: bool, where: str) -> bool:
    value = d.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError("expected a boolean", f"{where}.{key}")
    return value


def _parse_epoch(raw: Any, where: str) -> datetime:
    if isinstance(raw, datetime):
        dt = raw
    elif isinstance(raw, str):
        try:
            dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
        except ValueError as exc:
            raise ConfigError(f"invalid timestamp: {exc}", where) from None
    else:
        raise ConfigError("expected an ISO-8601 timestamp", where)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _build_node(merged: dict, index: int, channels: int, where: str) -> NodeConfig:
    _check_keys(merged, _NODE_KEYS, where)
    channel = merged.get("channel")
    if channel is not None:
        if isinstance(channel, bool) or not isinstance(channel, int) or not 0 <= channel < channels:
            raise ConfigError(f"channel must be in [0, {channels}), got {channel}", f"{where}.channel")
    jitter = merged.get("jitter_s")
    if jitter is not None and (isinstance(jitter, bool) or not isinstance(jitter, (int, float))):
        raise ConfigError("expected a number or null", f"{where}.jitter_s")
    try:
        radio = RadioParams(
            sf=_integer(merged, "sf", 7, where),
            bw_hz=_integer(merged, "bw_hz", 125_000, where),
            cr=_integer(merged, "cr", 1, where),
            preamble_symbols=_integer(merged, "preamble_symbols", 8, where),
            tx_power_dbm=_number(merged, "tx_power_dbm", 14.0, where),
            channel=channel,
        )
        return NodeConfig(
            dev_addr=_integer(merged, "dev_addr", DEV_ADDR_BASE + index, where, lo=0),
            radio=radio,
            period_s=_number(merged, "period_s", 30.0, where),
            confirmed=_boolean(merged, "confirmed", True, where),
            max_transmissions=_integer(merged, "max_transmissions", 8, where, lo=1),
            sense_time_s=_number(merged, "sense_time_s", 0.050, where, lo=0.0),
            rx1_delay_s=_number(merged, "rx1_delay_s", 1.0, where),
            rx2_delay_s=_number(merged, "rx2_delay_s", 2.0, where),
            rx_window_s=_number(merged, "rx_window_s", 0.030, where),
            distance_m=_number(merged, "distance_m", 50.0, where),
            wall_penalty_db=_number(merged, "wall_penalty_db", 0.0, where, lo=0.0),
            battery_mah=_number(merged, "battery_mah", 1000.0, where),
            jitter_s=None if jitter is None else float(jitter),
        )
    except ParameterError as exc:
        raise ConfigError(str(exc), where) from None


def scenario_from_dict(raw: Mapping | None, where: str = "scenario") -> Scenario:
    d = _require_mapping(raw, where)
    _check_keys(d, _TOP_KEYS, where)

    seed = _integer(d, "seed", 1, where, lo=0)
    duration_s = _number(d, "duration_s", DEFAULT_DURATION_S, where)
    if duration_s <= 0:
        raise ConfigError("must be positive", f"{where}.duration_s")
    channels = _integer(d, "channels", DEFAULT_CHANNELS, where, lo=1)
    if channels > 256:
        raise ConfigError("at most 256 channels supported", f"{where}.channels")
    capture = _number(d, "capture_threshold_db", 6.0, where, lo=0.0)
    ack_loss = _number(d, "ack_loss_prob", 0.0, where, lo=0.0)
    if ack_loss >= 1.0:
        raise ConfigError("must be < 1", f"{where}.ack_loss_prob")
    epoch = _parse_epoch(d.get("epoch", DEFAULT_EPOCH), f"{where}.epoch")

    root_key_hex = d.get("root_key_hex", DEFAULT_ROOT_KEY_HEX)
    if not isinstance(root_key_hex, str):
        raise ConfigError("expected a hex string", f"{where}.root_key_hex")
    try:
        root_key = bytes.fromhex(root_key_hex)
    except ValueError:
        raise ConfigError("expected a hex string", f"{where}.root_key_hex") from None
    if len(root_key) != 16:
        raise ConfigError("must be 16 bytes of hex", f"{where}.root_key_hex")

    pl = _require_mapping(d.get("path_loss"), f"{where}.path_loss")
    _check_keys(pl, {"pl0_db", "d0_m", "exponent", "wall_penalty_db"}, f"{where}.path_loss")
    en = _require_mapping(d.get("energy"), f"{where}.energy")
    _check_keys(
        en, {"sleep_ua", "mcu_run_ma", "analog_ma", "tx_ma", "rx_ma", "supply_v"}, f"{where}.energy"
    )
    sm = _require_mapping(d.get("sensor"), f"{where}.sensor")
    _check_keys(
        sm,
        {"base_temp_c", "daily_swing_c", "temp_noise_c", "base_rh_pct", "daily_swing_rh_pct", "rh_noise_pct"},
        f"{where}.sensor",
    )
    duty = _require_mapping(d.get("duty"), f"{where}.duty")
    _check_keys(duty, {"window_s", "max_fraction"}, f"{where}.duty")

    try:
        path_loss = PathLossModel(
            pl0_db=_number(pl, "pl0_db", 31.2, f"{where}.path_loss"),
            d0_m=_number(pl, "d0_m", 1.0, f"{where}.path_loss"),
            exponent=_number(pl, "exponent", 3.0, f"{where}.path_loss"),
            wall_penalty_db=_number(pl, "wall_penalty_db", 0.0, f"{where}.path_loss"),
        )
        energy = EnergyProfile(
            sleep_ua=_number(en, "sleep_ua", 4.0, f"{where}.energy"),
            mcu_run_ma=_number(en, "mcu_run_ma", 8.25, f"{where}.energy"),
            analog_ma=_number(en, "analog_ma", 2.0, f"{where}.energy"),
            tx_ma=_number(en, "tx_ma", 76.0, f"{where}.energy"),
            rx_ma=_number(en, "rx_ma", 11.0, f"{where}.energy"),
            supply_v=_number(en, "supply_v", 3.0, f"{where}.energy"),
        )
        sensor = SensorModel(
            base_temp_c=_number(sm, "base_temp_c", 26.0, f"{where}.sensor"),
            daily_swing_c=_number(sm, "daily_swing_c", 3.0, f"{where}.sensor"),
            temp_noise_c=_number(sm, "temp_noise_c", 0.2, f"{where}.sensor"),
            base_rh_pct=_number(sm, "base_rh_pct", 40.0, f"{where}.sensor"),
            daily_swing_rh_pct=_number(sm, "daily_swing_rh_pct", 5.0, f"{where}.sensor"),
            rh_noise_pct=_number(sm, "rh_noise_pct", 1.0, f"{where}.sensor"),
        )
    except ParameterError as exc:
        raise ConfigError(str(exc), where) from None

    duty_window = _number(duty, "window_s", DUTY_WINDOW_S, f"{where}.duty")
    duty_fraction = _number(duty, "max_fraction", DUTY_MAX_FRACTION, f"{where}.duty")
    if duty_window <= 0 or not 0 < duty_fraction <= 1:
        raise ConfigError("require window_s > 0 and max_fraction in (0, 1]", f"{where}.duty")

    defaults = _require_mapping(d.get("node_defaults"), f"{where}.node_defaults")
    _check_keys(defaults, _NODE_KEYS - {"dev_addr"}, f"{where}.node_defaults")

    nodes_raw = d.get("nodes")
    if nodes_raw is not None:
        if not isinstance(nodes_raw, list):
            raise ConfigError("expected a list", f"{where}.nodes")
        entries = [_require_mapping(e, f"{where}.nodes[{i}]") for i, e in enumerate(nodes_raw)]
    else:
        entries = [{} for _ in range(_integer(d, "n_nodes", DEFAULT_N_NODES, where, lo=1))]
    if not entries:
        raise ConfigError("at least one node required", f"{where}.nodes")

    nodes = []
    for i, entry in enumerate(entries):
        merged = {**defaults, **entry}
        nodes.append(_build_node(merged, i, channels, f"{where}.nodes[{i}]"))

    addrs = [n.dev_addr for n in nodes]
    if len(set(addrs)) != len(addrs):
        raise ConfigError("dev_addr values must be unique", f"{where}.nodes")

    for i, node in enumerate(nodes):
        airtime = float(time_on_air(node.radio, FRAME_LEN))
        active = node.sense_time_s + airtime + 2 * node.rx_window_s
        if active >= node.period_s:
            raise ConfigError(
                f"active time {active:.3f}s does not fit period {node.period_s}s",
                f"{where}.nodes[{i}]",
            )

    reboots_raw = d.get("reboots") or []
    if not isinstance(reboots_raw, list):
        raise ConfigError("expected a list", f"{where}.reboots")
    reboots = []
    for i, entry in enumerate(reboots_raw):
        rb = _require_mapping(entry, f"{where}.reboots[{i}]")
        _check_keys(rb, {"node", "time_s"}, f"{where}.reboots[{i}]")
        node_idx = _integer(rb, "node", 0, f"{where}.reboots[{i}]", lo=0)
        if node_idx >= len(nodes):
            raise ConfigError(f"node index {node_idx} out of range", f"{where}.reboots[{i}]")
        time_s = _number(rb, "time_s", 0.0, f"{where}.reboots[{i}]")
        if not 0 < time_s < duration_s:
            raise ConfigError("time_s must fall inside the run", f"{where}.reboots[{i}]")
        reboots.append(Reboot(node=node_idx, time_s=time_s))
    reboots.sort(key=lambda r: (r.time_s, r.node))

    return Scenario(
        seed=seed,
        duration_s=duration_s,
        channels=channels,
        capture_threshold_db=capture,
        ack_loss_prob=ack_loss,
        epoch=epoch,
        root_key=root_key,
        path_loss=path_loss,
        energy=energy,
        sensor=sensor,
        duty_window_s=duty_window,
        duty_max_fraction=duty_fraction,
        nodes=tuple(nodes),
        reboots=tuple(reboots),
    )


def load_scenario(path: str | None = None, overrides: list[str] | None = None) -> Scenario:
    """Load a scenario file and apply ``key.path=value`` overrides."""
    if path is None:
        raw: dict = {}
    else:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"unparseable scenario file: {exc}", path) from None
        if raw is None:
            raw = {}
        if not isinstance(raw, Mapping):
            raise ConfigError("scenario file must contain a mapping", path)
        raw = dict(raw)
    for item in overrides or []:
        raw = apply_override(raw, item)
    return scenario_from_dict(raw)


def apply_override(raw: Mapping, item: str) -> dict:
    """Apply one ``dotted.key=value`` override; values parse as YAML."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}", "override")
    dotted, _, literal = item.partition("=")
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"empty key in override {item!r}", "override")
    try:
        value = yaml.safe_load(literal)
    except yaml.YAMLError:
        value = literal
    result = dict(raw)
    cursor = result
    for key in keys[:-1]:
        nxt = cursor.get(key)
        nxt = dict(nxt) if isinstance(nxt, Mapping) else {}
        cursor[key] = nxt
        cursor = nxt
    cursor[keys[-1]] = value
    return result


def default_scenario(**overrides: Any) -> Scenario:
    """Reference deployment with optional top-level dict overrides."""
    return scenario_from_dict(overrides or {})


def node_sensitivity_dbm(node: NodeConfig) -> float:
    return sensitivity_dbm(node.radio.sf, node.radio.bw_hz)
