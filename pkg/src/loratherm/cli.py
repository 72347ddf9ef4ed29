"""Command line front end.

Subcommands cover the radio calculators (airtime, budget, lifetime),
the network simulator (simulate), and the collector side (serve,
replay, report). All deterministic output goes to stdout; progress and
timing go to stderr so runs can be diffed byte for byte.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 domain error.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading

from . import __version__, energy, phy
from .codec import FRAME_LEN
from .collector.lineproto import parse_timestamp
from .collector.pipeline import Collector, IngestOutcome
from .collector.server import serve as start_server
from .collector.store import Store
from .errors import LoRaThermError
from .simcore.runner import run_scenario
from .simcore.scenario import load_scenario


def _fmt_num(value: float, precision: int = 6) -> str:
    """Integers print bare; everything else trims trailing zeros."""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.{precision}f}".rstrip("0").rstrip(".")
    return str(value)


def _print_kv(pairs: list[tuple[str, object]]) -> None:
    for key, value in pairs:
        print(f"{key}={value}")


def _radio_from_args(args: argparse.Namespace) -> phy.RadioParams:
    return phy.RadioParams(
        sf=args.sf,
        bw_hz=args.bw,
        cr=args.cr,
        preamble_symbols=args.preamble,
        crc_on=not args.no_crc,
    )


# -- airtime ----------------------------------------------------------------


def cmd_airtime(args: argparse.Namespace) -> int:
    radio = _radio_from_args(args)
    toa_us = phy.time_on_air_us(radio, args.payload)
    sym_us = phy.symbol_time(radio) * 1_000_000
    _print_kv(
        [
            ("sf", radio.sf),
            ("bw_hz", radio.bw_hz),
            ("cr", f"4/{radio.cr + 4}"),
            ("payload_bytes", args.payload),
            ("preamble_symbols", radio.preamble_symbols),
            ("low_data_rate_optimize", int(radio.low_data_rate_optimize)),
            ("symbol_time_us", _fmt_num(float(sym_us))),
            ("payload_symbols", phy.payload_symbols(radio, args.payload)),
            ("airtime_us", toa_us),
            ("airtime_ms", _fmt_num(toa_us / 1000.0, 3)),
        ]
    )
    return 0


# -- budget -----------------------------------------------------------------


def cmd_budget(args: argparse.Namespace) -> int:
    mcl = phy.max_coupling_loss_db(args.tx_power, args.sensitivity)
    fsk_delta = args.fsk_sensitivity - args.sensitivity
    pairs: list[tuple[str, object]] = [
        ("tx_power_dbm", _fmt_num(args.tx_power)),
        ("sensitivity_dbm", _fmt_num(args.sensitivity)),
        ("mcl_db", _fmt_num(mcl)),
        ("fsk_sensitivity_dbm", _fmt_num(args.fsk_sensitivity)),
        ("fsk_advantage_db", _fmt_num(fsk_delta)),
    ]
    for sf in sorted(phy.VALID_SPREADING_FACTORS):
        pairs.append(
            (f"sf{sf}_sensitivity_dbm", _fmt_num(phy.sensitivity_dbm(sf, args.bw), 4))
        )
    if args.distance is not None:
        radio = phy.RadioParams(sf=args.sf, bw_hz=args.bw, tx_power_dbm=args.tx_power)
        model = phy.PathLossModel(wall_penalty_db=args.walls_db)
        pairs.append(("distance_m", _fmt_num(args.distance)))
        pairs.append(("path_loss_db", _fmt_num(phy.path_loss_db(args.distance, model), 4)))
        pairs.append(
            ("link_margin_db", _fmt_num(phy.link_margin_db(radio, args.distance, model), 4))
        )
    _print_kv(pairs)
    return 0


# -- lifetime ----------------------------------------------------------------


def cmd_lifetime(args: argparse.Namespace) -> int:
    if args.avg_ua is not None:
        days = energy.lifetime_days(args.battery_mah, args.avg_ua, args.derating)
        _print_kv(
            [
                ("battery_mah", _fmt_num(args.battery_mah)),
                ("derating", _fmt_num(args.derating)),
                ("avg_current_ua", _fmt_num(args.avg_ua, 4)),
                ("lifetime_days", _fmt_num(days, 4)),
                ("lifetime_years", _fmt_num(days / 365.25, 4)),
            ]
        )
        return 0

    # Table mode: one row per spreading factor, energy profile and frame
    # length taken from the scenario file (defaults when none given).
    scenario = _scenario_from_args(args)
    profile = scenario.energy
    columns = ["sf", "airtime_ms", "cycle_charge_mas", "avg_current_ua", "lifetime_days"]
    rows = []
    for sf in sorted(phy.VALID_SPREADING_FACTORS):
        radio = phy.RadioParams(sf=sf, bw_hz=args.bw, cr=args.cr, preamble_symbols=args.preamble)
        airtime_s = phy.time_on_air_us(radio, args.payload) / 1e6
        cycle = energy.reporting_cycle(airtime_s, args.period)
        avg_ua = energy.average_current_ua(profile, cycle)
        days = energy.lifetime_days(args.battery_mah, avg_ua, args.derating)
        rows.append(
            [
                str(sf),
                f"{airtime_s * 1000.0:.3f}",
                f"{energy.cycle_charge_mas(profile, cycle):.6f}",
                f"{avg_ua:.3f}",
                f"{days:.2f}",
            ]
        )
    if args.format == "csv":
        print(",".join(columns))
        for row in rows:
            print(",".join(row))
    else:
        print(
            f"period_s={_fmt_num(args.period)} battery_mah={_fmt_num(args.battery_mah)} "
            f"derating={_fmt_num(args.derating)} payload_bytes={args.payload}"
        )
        widths = [max(len(c), max(len(r[i]) for r in rows)) for i, c in enumerate(columns)]
        print("  ".join(c.ljust(widths[i]) for i, c in enumerate(columns)))
        for row in rows:
            print("  ".join(v.rjust(widths[i]) for i, v in enumerate(row)))
    return 0


# -- simulate -----------------------------------------------------------------


def _scenario_from_args(args: argparse.Namespace):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return load_scenario(args.scenario, overrides)


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    want_stream = args.stream is not None
    want_events = args.event_log is not None
    result = run_scenario(
        scenario,
        backend=args.backend,
        collect_measurements=want_stream or want_events,
        collect_deliveries=want_stream,
        collect_attempts=want_events,
    )
    stats = result.stats
    print(f"# scenario={stats.scenario_hash} seed={stats.seed} backend={stats.backend}")
    if args.format == "json":
        print(stats.format_json())
    elif args.format == "csv":
        sys.stdout.write(stats.format_csv())
    else:
        sys.stdout.write(stats.format_text())
    if want_stream:
        count = result.write_stream(args.stream)
        print(f"stream: {count} lines -> {args.stream}", file=sys.stderr)
    if want_events:
        count = result.write_event_log(args.event_log)
        print(f"event log: {count} lines -> {args.event_log}", file=sys.stderr)
    print(f"elapsed_s={result.elapsed_s:.3f}", file=sys.stderr)
    return 0


# -- collector commands --------------------------------------------------------


def _device_keys(args: argparse.Namespace) -> dict[int, bytes]:
    scenario = _scenario_from_args(args)
    return scenario.device_keys()


def cmd_serve(args: argparse.Namespace) -> int:
    keys = _device_keys(args)
    with Store(args.store) as store:
        collector = Collector(store, keys)
        server = start_server(collector, args.host, args.port, background=True)
        host, port = server.server_address[:2]
        print(f"listening host={host} port={port}", flush=True)
        stop = threading.Event()
        for signum in (signal.SIGINT, signal.SIGTERM):
            signal.signal(signum, lambda *_: stop.set())
        stop.wait()
        server.shutdown()
        server.server_close()
        counts = {o.value: collector.counts[o] for o in IngestOutcome}
        print(f"shutting down lines={server.lines_seen}", file=sys.stderr)
        _print_kv(sorted(counts.items()))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    keys = _device_keys(args)
    with Store(args.store) as store:
        collector = Collector(store, keys)
        lines = 0
        with open(args.stream, "r", encoding="utf-8") as fh:
            for raw in fh:
                text = raw.strip()
                if not text:
                    continue
                collector.ingest_line(text)
                lines += 1
        _print_kv([("lines", lines)])
        _print_kv([(o.value, collector.counts[o]) for o in IngestOutcome])
        _print_kv([("devices", len(collector.device_addresses()))])
    return 0


def _render_report(report: dict) -> str:
    top = [
        ("points", report["points"]),
        ("nodes", report["nodes"]),
        ("duplicates", report["duplicates"]),
        ("server_duplicate_ratio", f"{report['server_duplicate_ratio']:.6f}"),
        ("node_conflict_delta", report["node_conflict_delta"]),
        ("node_conflict_ratio", f"{report['node_conflict_ratio']:.6f}"),
        ("gaps", report["gaps"]),
        ("missing", report["missing"]),
        ("completeness", f"{report['completeness']:.6f}"),
        ("resets", report["resets"]),
    ]
    width = max(len(k) for k, _ in top)
    out = [f"{k:<{width}}  {v}" for k, v in top]
    out.append("")
    out.append(
        "dev_addr  points   complete  gaps miss  temp_mean  batt_last  conflicts resets dups"
    )
    for node in report["per_node"]:
        out.append(
            f"{node['dev_addr']:08x}  {node['points']:<8d} "
            f"{node['completeness']:<9.6f} {node['gaps']:<4d} {node['missing']:<5d} "
            f"{node['temp_mean_c']:<10.3f} {node['battery_last_mv']:<10d} "
            f"{node['conflict_delta']:<9d} {node['resets']:<6d} {node['duplicates']}"
        )
    return "\n".join(out) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    since = parse_timestamp(args.since) if args.since else None
    until = parse_timestamp(args.until) if args.until else None
    with Store(args.store) as store:
        collector = Collector(store, {})
        report = collector.report(since, until)
        if args.export:
            rows = collector.export_csv(args.export, since, until)
            print(f"exported_rows={rows}", file=sys.stderr)
        if args.format == "json":
            print(json.dumps(report, indent=2, sort_keys=True))
        else:
            sys.stdout.write(_render_report(report))
    return 0


# -- parser --------------------------------------------------------------------


def _add_radio_args(sub: argparse.ArgumentParser, payload_default: int = FRAME_LEN) -> None:
    sub.add_argument("--sf", type=int, default=7, help="spreading factor 7..12")
    sub.add_argument("--bw", type=int, default=125000, help="bandwidth in Hz")
    sub.add_argument("--cr", type=int, default=1, help="coding rate index 1..4 (4/5..4/8)")
    sub.add_argument("--payload", type=int, default=payload_default, help="payload bytes")
    sub.add_argument("--preamble", type=int, default=8, help="preamble symbol count")
    sub.add_argument("--no-crc", action="store_true", help="disable payload CRC")


def _add_scenario_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", metavar="FILE", help="scenario file (YAML)")
    sub.add_argument("--seed", type=int, help="override the scenario seed")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a scenario entry (dotted keys, repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loratherm",
        description="LoRa sensor network simulator and telemetry collector.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("airtime", help="frame time-on-air calculator")
    _add_radio_args(p)
    p.set_defaults(func=cmd_airtime)

    p = sub.add_parser("budget", help="link budget calculator")
    p.add_argument("--tx-power", type=float, default=phy.DEVICE_MAX_TX_POWER_DBM)
    p.add_argument("--sensitivity", type=float, default=phy.DEVICE_SENSITIVITY_DBM)
    p.add_argument(
        "--fsk-sensitivity", type=float, default=phy.FSK_REFERENCE_SENSITIVITY_DBM
    )
    p.add_argument("--bw", type=int, default=125000)
    p.add_argument("--sf", type=int, default=12, help="for the margin computation")
    p.add_argument("--distance", type=float, help="also print margin at this range (m)")
    p.add_argument("--walls-db", type=float, default=0.0)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("lifetime", help="battery lifetime estimator")
    p.add_argument("--battery-mah", type=float, default=1000.0)
    p.add_argument("--derating", type=float, default=1.0)
    p.add_argument("--avg-ua", type=float, help="mean draw in uA; skips the cycle model")
    p.add_argument("--period", type=float, default=30.0, help="reporting period (s)")
    p.add_argument("--scenario", metavar="FILE", help="scenario file for the energy profile")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help=argparse.SUPPRESS)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--bw", type=int, default=125000)
    p.add_argument("--cr", type=int, default=1)
    p.add_argument("--payload", type=int, default=FRAME_LEN)
    p.add_argument("--preamble", type=int, default=8)
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("simulate", help="run a network simulation")
    _add_scenario_args(p)
    p.add_argument(
        "--backend",
        choices=["auto", "python", "compiled"],
        help="event engine (default: compiled when built)",
    )
    p.add_argument("--stream", metavar="FILE", help="write delivered uplinks as gateway lines")
    p.add_argument("--event-log", metavar="FILE", help="write per-attempt event log")
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="ingest gateway lines over TCP")
    _add_scenario_args(p)
    p.add_argument("--store", required=True, metavar="DIR", help="measurement store directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=6181)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="ingest a recorded gateway stream")
    _add_scenario_args(p)
    p.add_argument("stream", metavar="STREAM", help="gateway line file from simulate")
    p.add_argument("--store", required=True, metavar="DIR")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="summarize a measurement store")
    p.add_argument("--store", required=True, metavar="DIR")
    p.add_argument("--since", metavar="ISO8601")
    p.add_argument("--until", metavar="ISO8601")
    p.add_argument("--export", metavar="CSV", help="also export records as CSV")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LoRaThermError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
