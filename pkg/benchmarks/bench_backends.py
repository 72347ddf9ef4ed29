#!/usr/bin/env python3
"""Benchmark the pure-Python event engine against the compiled one.

Runs the same scenario through both backends, verifies every output
field agrees exactly (the compiled engine must be a bit-for-bit drop-in,
not an approximation), and prints a timing table.

Usage:
    python3 benchmarks/bench_backends.py [--days 7] [--nodes 20] [--repeat 3]
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

import numpy as np

from loratherm.simcore.backend import available_engines
from loratherm.simcore.data import build_engine_inputs
from loratherm.simcore.scenario import default_scenario


def outputs_equal(a, b) -> list[str]:
    """Names of EngineOutputs fields that differ (empty when identical)."""
    diffs = []
    for f in dataclasses.fields(a):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            same = (
                va is not None
                and vb is not None
                and va.dtype == vb.dtype
                and va.shape == vb.shape
                and bool(np.array_equal(va, vb))
            )
        else:
            same = va == vb
        if not same:
            diffs.append(f.name)
    return diffs


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--days", type=float, default=7.0, help="simulated days")
    parser.add_argument("--nodes", type=int, default=20)
    parser.add_argument("--repeat", type=int, default=3, help="timing runs per backend")
    args = parser.parse_args(argv)

    engines = available_engines()
    if "compiled" not in engines:
        print("compiled engine not built; nothing to compare", file=sys.stderr)
        return 1

    scenario = default_scenario(duration_s=args.days * 86400.0, n_nodes=args.nodes)
    print(
        f"scenario: {args.nodes} nodes, {args.days:g} days, seed {scenario.seed}, "
        f"hash {scenario.scenario_hash()}"
    )

    results = {}
    timings = {}
    for name in ("python", "compiled"):
        best = float("inf")
        for _ in range(max(1, args.repeat)):
            inputs = build_engine_inputs(scenario)
            t0 = time.perf_counter()
            out = engines[name].run(inputs)
            best = min(best, time.perf_counter() - t0)
        results[name] = out
        timings[name] = best

    diffs = outputs_equal(results["python"], results["compiled"])
    base = timings["python"]
    print(f"{'backend':<10} {'best_s':>10} {'speedup':>9}")
    for name in ("python", "compiled"):
        print(f"{name:<10} {timings[name]:>10.4f} {base / timings[name]:>8.1f}x")
    print(f"tx_attempts={results['python'].tx_attempts} delivered={results['python'].delivered}")
    if diffs:
        print(f"OUTPUT MISMATCH in fields: {', '.join(diffs)}", file=sys.stderr)
        return 1
    print("outputs: identical across backends")
    return 0


if __name__ == "__main__":
    sys.exit(main())
