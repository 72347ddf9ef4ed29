"""Command line interface tests.

Everything runs through cli.main() in process (the cli fixture), except
the serve test, which needs real signal handlers and therefore spawns a
subprocess. Calculator output is key=value per line and treated as a
stable interface; simulate prepends a '# scenario=... seed=... backend='
header so runs can be identified after the fact.
"""

from __future__ import annotations

import json
import re
import signal
import socket
import subprocess
import sys
import time
from datetime import datetime, timezone

import pytest

from loratherm import energy, phy
from loratherm.codec import SensorPayload, encode_frame
from loratherm.collector.lineproto import GatewayLine, format_gateway_line
from loratherm.collector.pipeline import CSV_COLUMNS
from loratherm.simcore.scenario import default_scenario


class TestAirtime:
    def test_reference_frame_sf7(self, cli):
        """21-byte frame at SF7/125k: the workhorse configuration."""
        res = cli("airtime")
        assert res.code == 0
        kv = res.kv()
        assert kv["sf"] == "7"
        assert kv["bw_hz"] == "125000"
        assert kv["cr"] == "4/5"
        assert kv["payload_bytes"] == "21"
        assert kv["preamble_symbols"] == "8"
        assert kv["low_data_rate_optimize"] == "0"
        assert kv["symbol_time_us"] == "1024"
        assert kv["payload_symbols"] == "43"
        assert kv["airtime_us"] == "56576"
        assert kv["airtime_ms"] == "56.576"

    def test_reference_frame_sf12(self, cli):
        res = cli("airtime", "--sf", "12")
        kv = res.kv()
        assert kv["low_data_rate_optimize"] == "1"
        assert kv["symbol_time_us"] == "32768"
        assert kv["payload_symbols"] == "33"
        assert kv["airtime_us"] == "1482752"
        assert kv["airtime_ms"] == "1482.752"

    @pytest.mark.parametrize("sf,bw,payload", [(8, 125_000, 12), (10, 250_000, 21), (7, 500_000, 64)])
    def test_matches_library(self, cli, sf, bw, payload):
        res = cli("airtime", "--sf", str(sf), "--bw", str(bw), "--payload", str(payload))
        radio = phy.RadioParams(sf=sf, bw_hz=bw)
        assert int(res.kv()["airtime_us"]) == phy.time_on_air_us(radio, payload)

    def test_no_crc_shortens_frame(self, cli):
        with_crc = int(cli("airtime").kv()["airtime_us"])
        without = int(cli("airtime", "--no-crc").kv()["airtime_us"])
        assert without < with_crc

    def test_invalid_sf_is_domain_error(self, cli):
        res = cli("airtime", "--sf", "6")
        assert res.code == 3
        assert res.err.startswith("error:")

    def test_unknown_flag_is_usage_error(self, cli):
        res = cli("airtime", "--frobnicate")
        assert res.code == 2


class TestBudget:
    def test_reference_budget(self, cli):
        """20 dBm against the -148 dBm floor: 168 dB coupling loss, 26 dB
        over the -122 dBm FSK reference."""
        res = cli("budget")
        assert res.code == 0
        kv = res.kv()
        assert kv["tx_power_dbm"] == "20"
        assert kv["sensitivity_dbm"] == "-148"
        assert kv["mcl_db"] == "168"
        assert kv["fsk_sensitivity_dbm"] == "-122"
        assert kv["fsk_advantage_db"] == "26"
        assert kv["sf7_sensitivity_dbm"] == "-124.5309"
        assert kv["sf12_sensitivity_dbm"] == "-137.0309"

    def test_margin_at_distance(self, cli):
        res = cli("budget", "--distance", "50", "--sf", "7")
        kv = res.kv()
        assert float(kv["distance_m"]) == 50.0
        assert float(kv["path_loss_db"]) == pytest.approx(phy.path_loss_db(50.0), abs=1e-3)
        radio = phy.RadioParams(sf=7, bw_hz=125_000, tx_power_dbm=20)
        assert float(kv["link_margin_db"]) == pytest.approx(
            phy.link_margin_db(radio, 50.0), abs=1e-3
        )
        assert float(kv["link_margin_db"]) > 0

    def test_wall_penalty_reduces_margin(self, cli):
        clear = float(cli("budget", "--distance", "50").kv()["link_margin_db"])
        walled = float(
            cli("budget", "--distance", "50", "--walls-db", "12").kv()["link_margin_db"]
        )
        assert walled == pytest.approx(clear - 12.0, abs=1e-9)

    def test_distance_below_reference_is_domain_error(self, cli):
        res = cli("budget", "--distance", "0")
        assert res.code == 3
        assert res.err.startswith("error:")


class TestLifetime:
    def test_avg_current_shortcut(self, cli):
        """1000 mAh at the deployment's 194 uA mean draw."""
        res = cli("lifetime", "--avg-ua", "194")
        assert res.code == 0
        kv = res.kv()
        assert kv["battery_mah"] == "1000"
        assert kv["lifetime_days"] == "214.7766"
        assert kv["lifetime_years"] == "0.588"

    def test_derating_matches_library(self, cli):
        res = cli("lifetime", "--avg-ua", "194", "--derating", "0.85")
        want = energy.lifetime_days(1000.0, 194.0, 0.85)
        assert float(res.kv()["lifetime_days"]) == pytest.approx(want, abs=1e-3)

    def test_table_text(self, cli):
        res = cli("lifetime")
        assert res.code == 0
        lines = res.out.splitlines()
        assert lines[0].startswith("period_s=30 battery_mah=1000")
        header = lines[1].split()
        assert header == ["sf", "airtime_ms", "cycle_charge_mas", "avg_current_ua", "lifetime_days"]
        rows = [ln.split() for ln in lines[2:8]]
        assert [r[0] for r in rows] == ["7", "8", "9", "10", "11", "12"]
        assert rows[0][1] == "56.576"
        # Longer airtime per frame can only cost battery life.
        days = [float(r[4]) for r in rows]
        assert days == sorted(days, reverse=True)
        assert days[0] > 200.0

    def test_table_csv_matches_energy_model(self, cli):
        res = cli("lifetime", "--format", "csv")
        lines = res.out.splitlines()
        assert lines[0] == "sf,airtime_ms,cycle_charge_mas,avg_current_ua,lifetime_days"
        assert len(lines) == 7
        row = lines[3].split(",")  # sf 9
        assert row[0] == "9"
        profile = default_scenario().energy
        radio = phy.RadioParams(sf=9, bw_hz=125_000)
        air_s = phy.time_on_air_us(radio, 21) / 1e6
        cycle = energy.reporting_cycle(air_s, 30.0)
        avg_ua = energy.average_current_ua(profile, cycle)
        assert row[1] == f"{air_s * 1000.0:.3f}"
        assert row[2] == f"{energy.cycle_charge_mas(profile, cycle):.6f}"
        assert row[3] == f"{avg_ua:.3f}"
        assert row[4] == f"{energy.lifetime_days(1000.0, avg_ua):.2f}"


HEADER_RE = re.compile(r"^# scenario=([0-9a-f]{16}) seed=(\d+) backend=(python|compiled)$")


def stats_from_json_run(res) -> dict:
    lines = res.out.splitlines()
    assert HEADER_RE.match(lines[0]), lines[0]
    return json.loads("\n".join(lines[1:]))


class TestSimulate:
    SMALL = ("--set", "duration_s=7200", "--set", "n_nodes=5")

    def test_text_format_and_header(self, cli):
        res = cli("simulate", *self.SMALL, "--seed", "11")
        assert res.code == 0
        lines = res.out.splitlines()
        m = HEADER_RE.match(lines[0])
        assert m and m.group(2) == "11"
        body = res.out
        for field in ("conflict_pct", "avg_current_ua", "est_lifetime_days", "dev_addr"):
            assert field in body
        # One per-node row per simulated device.
        assert len(re.findall(r"(?m)^[0-9a-f]{8}\s", body)) == 5

    def test_json_stats_conserve_attempts(self, cli):
        res = cli("simulate", *self.SMALL, "--seed", "11", "--format", "json")
        stats = stats_from_json_run(res)
        assert stats["seed"] == 11
        assert stats["n_nodes"] == 5
        assert (
            stats["tx_attempts"]
            == stats["delivered"] + stats["collided"] + stats["below_sensitivity"]
        )
        assert stats["measurements_taken"] == stats["points_collected"] + stats["given_up"]
        assert len(stats["per_node"]) == 5

    def test_seed_flag_wins_over_set(self, cli):
        res = cli("simulate", *self.SMALL, "--set", "seed=99", "--seed", "3", "--format", "json")
        assert stats_from_json_run(res)["seed"] == 3

    def test_csv_format(self, cli):
        res = cli("simulate", *self.SMALL, "--seed", "11", "--format", "csv")
        lines = res.out.splitlines()
        assert lines[1] == "key,value"
        rows = dict(ln.split(",", 1) for ln in lines[2:])
        assert rows["seed"] == "11"
        assert int(rows["tx_attempts"]) > 0
        assert "per_node" not in rows

    def test_output_is_deterministic(self, cli):
        args = ("simulate", "--set", "duration_s=3600", "--set", "n_nodes=3", "--seed", "13", "--format", "json")
        assert cli(*args).out == cli(*args).out

    def test_backends_agree_via_cli(self, cli):
        args = ("simulate", "--set", "duration_s=7200", "--set", "n_nodes=4", "--seed", "9", "--format", "json")
        a = stats_from_json_run(cli(*args, "--backend", "python"))
        b = stats_from_json_run(cli(*args, "--backend", "compiled"))
        assert a.pop("backend") == "python"
        assert b.pop("backend") == "compiled"
        assert a == b

    def test_stream_and_event_log_files(self, cli, tmp_path):
        gw = tmp_path / "gw.log"
        ev = tmp_path / "events.log"
        res = cli(
            "simulate", *self.SMALL, "--seed", "11", "--format", "json",
            "--stream", str(gw), "--event-log", str(ev),
        )
        stats = stats_from_json_run(res)
        stream_lines = gw.read_text().splitlines()
        assert len(stream_lines) == stats["delivered"]
        assert all(ln.startswith("ts=") and " frame=" in ln for ln in stream_lines[:50])
        ev_lines = ev.read_text().splitlines()
        assert sum(1 for ln in ev_lines if " ev=tx " in ln) == stats["tx_attempts"]
        assert sum(1 for ln in ev_lines if " ev=drop " in ln) == stats["given_up"]
        assert len(ev_lines) == stats["tx_attempts"] + stats["given_up"]

    def test_unknown_scenario_key_is_domain_error(self, cli):
        res = cli("simulate", "--set", "warp_factor=9")
        assert res.code == 3
        assert res.err.startswith("error:")

    def test_bad_override_syntax_is_domain_error(self, cli):
        assert cli("simulate", "--set", "duration_s").code == 3

    def test_missing_scenario_file_is_io_error(self, cli):
        res = cli("simulate", "--scenario", "/nonexistent/base.scn")
        assert res.code == 1
        assert res.err.startswith("error:")

    def test_missing_subcommand_is_usage_error(self, cli):
        assert cli().code == 2

    def test_unknown_subcommand_is_usage_error(self, cli):
        assert cli("teleport").code == 2

    def test_version(self, cli):
        res = cli("--version")
        assert res.code == 0
        assert res.out.strip() == "loratherm 0.1.0"


class TestReplayReport:
    SETUP = (
        "--set", "duration_s=7200", "--set", "n_nodes=3",
        "--set", "ack_loss_prob=0.05", "--seed", "5",
    )

    def test_round_trip(self, cli, tmp_path):
        """simulate -> replay -> report reproduces the simulator's own
        collection statistics from nothing but the gateway stream."""
        gw = tmp_path / "gw.log"
        store = tmp_path / "store"
        sim = cli("simulate", *self.SETUP, "--format", "json", "--stream", str(gw))
        stats = stats_from_json_run(sim)
        assert stats["duplicates_suppressed"] > 0  # lossy ACKs force retransmissions

        rep = cli("replay", str(gw), "--store", str(store), *self.SETUP)
        assert rep.code == 0
        kv = rep.kv()
        assert int(kv["lines"]) == stats["delivered"]
        assert int(kv["accepted"]) == stats["points_collected"]
        assert int(kv["duplicate"]) == stats["duplicates_suppressed"]
        assert int(kv["malformed"]) == 0
        assert int(kv["integrity_reject"]) == 0
        assert int(kv["unknown_device"]) == 0
        assert int(kv["devices"]) == 3

        rpt = cli("report", "--store", str(store), "--format", "json")
        assert rpt.code == 0
        report = json.loads(rpt.out)
        assert report["points"] == stats["points_collected"]
        assert report["duplicates"] == stats["duplicates_suppressed"]
        assert report["nodes"] == 3
        assert report["resets"] == 0
        # The server only sees interior losses; trailing ones are invisible.
        assert report["missing"] <= stats["given_up"]
        assert report["gaps"] <= stats["continuity_gaps"]
        assert report["completeness"] == pytest.approx(
            report["points"] / (report["points"] + report["missing"])
        )

        text = cli("report", "--store", str(store))
        assert text.code == 0
        assert len(re.findall(r"(?m)^[0-9a-f]{8}\s", text.out)) == 3

        out_csv = tmp_path / "export.csv"
        exp = cli("report", "--store", str(store), "--export", str(out_csv))
        assert exp.code == 0
        assert f"exported_rows={report['points']}" in exp.err
        csv_lines = out_csv.read_text().splitlines()
        assert csv_lines[0] == ",".join(CSV_COLUMNS)
        assert len(csv_lines) == report["points"] + 1

        future = cli(
            "report", "--store", str(store), "--format", "json",
            "--since", "2030-01-01T00:00:00Z",
        )
        assert json.loads(future.out)["points"] == 0

    def test_replay_missing_stream_is_io_error(self, cli, tmp_path):
        res = cli("replay", str(tmp_path / "nope.log"), "--store", str(tmp_path / "s"))
        assert res.code == 1
        assert res.err.startswith("error:")

    def test_report_empty_store(self, cli, tmp_path):
        res = cli("report", "--store", str(tmp_path / "empty"), "--format", "json")
        assert res.code == 0
        report = json.loads(res.out)
        assert report["points"] == 0
        assert report["completeness"] == 1.0

    def test_export_to_bad_path_is_io_error(self, cli, tmp_path):
        store = tmp_path / "empty"
        res = cli("report", "--store", str(store), "--export", "/nonexistent/dir/out.csv")
        assert res.code == 1


def make_line(dev_addr: int, fcnt: int, key: bytes) -> str:
    frame = encode_frame(SensorPayload(2150, 4300, 3600, 0), dev_addr, fcnt, key)
    gl = GatewayLine(
        ts=datetime(2018, 3, 1, tzinfo=timezone.utc),
        rssi_dbm=-82,
        snr_db=7.5,
        channel=0,
        sf=7,
        frame=frame,
    )
    return format_gateway_line(gl)


class TestServe:
    def test_serve_ingests_over_tcp(self, tmp_path):
        """Full daemon lifecycle: bind, ingest, SIGTERM, final counters."""
        keys = default_scenario().device_keys()
        lines = [
            make_line(0x01000001, 0, keys[0x01000001]),
            make_line(0x01000002, 0, keys[0x01000002]),
            make_line(0x01000001, 0, keys[0x01000001]),  # duplicate
            "this is not a gateway line",
        ]
        proc = subprocess.Popen(
            [
                sys.executable, "-c",
                "import sys; from loratherm.cli import main; sys.exit(main(sys.argv[1:]))",
                "serve", "--store", str(tmp_path / "store"), "--port", "0",
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            banner = proc.stdout.readline()
            m = re.match(r"listening host=127\.0\.0\.1 port=(\d+)", banner)
            assert m, banner
            port = int(m.group(1))
            with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
                sock.sendall(("\n".join(lines) + "\n\n").encode())
            # Handler threads are daemonic; give them a beat to drain
            # before asking the process to shut down and print counters.
            time.sleep(0.8)
            proc.send_signal(signal.SIGTERM)
            out, err = proc.communicate(timeout=10)
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.communicate()
        assert proc.returncode == 0
        kv = dict(
            ln.split("=", 1) for ln in out.splitlines() if "=" in ln and " " not in ln.split("=")[0]
        )
        assert kv["accepted"] == "2"
        assert kv["duplicate"] == "1"
        assert kv["malformed"] == "1"
        assert kv["unknown_device"] == "0"
        assert "shutting down lines=4" in err
