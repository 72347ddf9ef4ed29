"""Pure-Python event engine.

Reference implementation of the node/channel event loop; the compiled
engine in ``_engine.pyx`` mirrors it operation for operation, including
the order of floating-point accumulation, so both produce bit-identical
results from the same ``EngineInputs``.

Event kinds and per-event behavior:

* WAKE: take a measurement and start its first transmission, or defer
  it when the previous frame is still in flight (at most one deferral
  is queued; further wakes in the same episode are skipped).
* TX_END: settle the attempt's radio outcome against everything it
  overlapped on its channel.
* RESOLVE: close of the second receive window. Confirmed traffic either
  finishes (acknowledged) or backs off and retries until the attempt
  budget runs out; unconfirmed traffic just finishes.
* REBOOT: injected device reset; counters clear, charge accounting and
  the wake grid continue.

Stale TX_END/RESOLVE events from before a reboot are invalidated by an
epoch counter carried in the event.
"""

from __future__ import annotations

import heapq
from array import array

import numpy as np

from .data import (
    EngineInputs,
    EngineOutputs,
    OUTCOME_ABORTED,
    OUTCOME_BELOW_SENSITIVITY,
    OUTCOME_COLLIDED,
    OUTCOME_DELIVERED,
)

WAKE = 0
TX_END = 1
RESOLVE = 2
REBOOT = 3

NO_INTERFERENCE_DBM = float("-inf")
DUTY_EPS = 1e-9

name = "python"


def run(inp: EngineInputs) -> EngineOutputs:
    n = inp.n_nodes
    duration = inp.duration_s
    channels = inp.channels
    capture_db = inp.capture_db
    ack_loss_prob = inp.ack_loss_prob
    duty_window = inp.duty_window_s
    duty_cap = inp.duty_capacity_s
    sleep_ma = inp.sleep_ma
    run_ma = inp.run_ma
    tx_ma = inp.tx_ma
    rx_ma = inp.rx_ma

    period = inp.period.tolist()
    airtime = inp.airtime.tolist()
    sense = inp.sense.tolist()
    rx1_delay = inp.rx1_delay.tolist()
    rx2_delay = inp.rx2_delay.tolist()
    rx_window = inp.rx_window.tolist()
    rx_power = inp.rx_power.tolist()
    floor = inp.floor.tolist()
    sf = inp.sf.tolist()
    confirmed = inp.confirmed.tolist()
    max_tx = inp.max_tx.tolist()
    fixed_chan = inp.fixed_chan.tolist()
    battery_mas = inp.battery_mas.tolist()
    n_slots = inp.n_slots.tolist()
    jitter = [a.tolist() for a in inp.jitter]
    chan_bulk = [None if a is None else a.tolist() for a in inp.chan_bulk]
    temp = [a.tolist() for a in inp.temp_centi]
    rh = [a.tolist() for a in inp.rh_centi]
    chan_gen = inp.chan_gen
    backoff_gen = inp.backoff_gen
    ack_gen = inp.ack_gen

    # Per-node dynamic state.
    busy = [False] * n
    pending = [-1] * n
    next_fcnt = [0] * n
    conflicts = [0] * n
    epoch = [0] * n
    resets = [0] * n
    chan_idx = [0] * n
    cur_fcnt = [0] * n
    cur_attempt = [0] * n
    cur_chan = [0] * n
    cur_start = [0.0] * n
    cur_end = [0.0] * n
    cur_outcome = [0] * n
    cur_max_other = [NO_INTERFERENCE_DBM] * n
    active_charge = [0.0] * n
    active_within = [0.0] * n
    active_total = [0.0] * n
    delivered_unique = [0] * n
    node_given_up = [0] * n
    node_meas = [0] * n
    seen = [bytearray(slots + 2) for slots in n_slots]

    # Per-node duty ledgers (rolling-window grant records).
    duty_start: list[list[float]] = [[] for _ in range(n)]
    duty_air: list[list[float]] = [[] for _ in range(n)]
    duty_head = [0] * n
    duty_used = [0.0] * n

    # Per-channel on-air sets: node ids currently inserted.
    on_air: list[list[int]] = [[] for _ in range(channels)]

    tx_attempts = delivered = collided = below_cnt = 0
    duplicates = given_up = measurements = skipped = deferred = aborted = 0
    duty_wait = 0.0

    collect_meas = inp.collect_measurements
    collect_del = inp.collect_deliveries
    collect_att = inp.collect_attempts
    meas_node = array("H")
    meas_fcnt = array("I")
    meas_slot = array("I")
    meas_time = array("d")
    meas_temp = array("h")
    meas_rh = array("H")
    meas_mv = array("H")
    meas_conf = array("H")
    del_time = array("d")
    del_node = array("H")
    del_fcnt = array("I")
    del_attempt = array("B")
    del_chan = array("B")
    del_dup = array("B")
    att_start = array("d")
    att_end = array("d")
    att_node = array("H")
    att_fcnt = array("I")
    att_no = array("B")
    att_chan = array("B")
    att_outcome = array("B")
    gu_time = array("d")
    gu_node = array("H")
    gu_fcnt = array("I")

    heap: list[tuple] = []
    push = heapq.heappush
    pop = heapq.heappop
    seq = 0

    for i in range(n):
        if n_slots[i] > 0:
            t0 = jitter[i][0]
            if t0 < duration:
                push(heap, (t0, i, seq, WAKE, 0))
                seq += 1
    for t_rb, i_rb in inp.reboots:
        push(heap, (t_rb, i_rb, seq, REBOOT, 0))
        seq += 1

    def charge(i: int, a: float, b: float, ma: float) -> None:
        # Clip the segment to the run horizon; track both clipped time
        # (for final sleep accounting) and wall time (for the gauge).
        lo = a if a < duration else duration
        hi = b if b < duration else duration
        d = hi - lo
        if d > 0.0:
            active_charge[i] += ma * d
            active_within[i] += d
        active_total[i] += b - a

    def grant(i: int, air: float, now: float) -> float:
        # Rolling-window duty ledger: expire aged grants, then if the
        # budget is full, wait for the oldest live grant to age out.
        starts = duty_start[i]
        airs = duty_air[i]
        head = duty_head[i]
        used = duty_used[i]
        cutoff = now - duty_window
        size = len(starts)
        while head < size and starts[head] <= cutoff:
            used -= airs[head]
            head += 1
        if head == size:
            used = 0.0
        live_total = used
        start = now
        j = head
        while used + air > duty_cap + DUTY_EPS:
            start = starts[j] + duty_window
            used -= airs[j]
            j += 1
        starts.append(start)
        airs.append(air)
        duty_used[i] = live_total + air
        if head > 256:
            del starts[:head]
            del airs[:head]
            head = 0
        duty_head[i] = head
        return start

    def pick_channel(i: int) -> int:
        fc = fixed_chan[i]
        if fc >= 0:
            return fc
        idx = chan_idx[i]
        chan_idx[i] = idx + 1
        bulk = chan_bulk[i]
        if idx < len(bulk):
            return bulk[idx]
        return int(chan_gen[i].integers(0, channels))

    def start_attempt(i: int, attempt: int, ready: float) -> None:
        nonlocal tx_attempts, duty_wait, seq
        ch = pick_channel(i)
        start = grant(i, airtime[i], ready)
        duty_wait += start - ready
        end = start + airtime[i]
        tx_attempts += 1
        cur_attempt[i] = attempt
        cur_chan[i] = ch
        cur_start[i] = start
        cur_end[i] = end
        # Mutual interference marking: every overlapping same-SF pair is
        # co-resident at one of its two insertion instants.
        strongest = NO_INTERFERENCE_DBM
        my_sf = sf[i]
        my_power = rx_power[i]
        for j in on_air[ch]:
            if sf[j] != my_sf:
                continue
            if start < cur_end[j] and cur_start[j] < end:
                if rx_power[j] > strongest:
                    strongest = rx_power[j]
                if my_power > cur_max_other[j]:
                    cur_max_other[j] = my_power
        cur_max_other[i] = strongest
        on_air[ch].append(i)
        push(heap, (end, i, seq, TX_END, epoch[i]))
        seq += 1

    def take(i: int, slot: int, t: float) -> None:
        nonlocal measurements
        fcnt = next_fcnt[i]
        next_fcnt[i] = fcnt + 1
        measurements += 1
        node_meas[i] += 1
        if collect_meas:
            gap = t - active_total[i]
            consumed = active_charge[i] + sleep_ma * (gap if gap > 0.0 else 0.0)
            volts = 4200.0 - 1200.0 * (consumed / battery_mas[i])
            if volts < 3000.0:
                volts = 3000.0
            meas_node.append(i)
            meas_fcnt.append(fcnt)
            meas_slot.append(slot)
            meas_time.append(t)
            meas_temp.append(temp[i][slot])
            meas_rh.append(rh[i][slot])
            meas_mv.append(int(volts + 0.5))
            meas_conf.append(conflicts[i] & 0xFFFF)
        busy[i] = True
        cur_fcnt[i] = fcnt
        charge(i, t, t + sense[i], run_ma)
        start_attempt(i, 1, t + sense[i])

    def finish(i: int, t: float) -> None:
        busy[i] = False
        if pending[i] >= 0:
            slot = pending[i]
            pending[i] = -1
            take(i, slot, t)

    while heap:
        t, i, _, kind, arg = pop(heap)

        if kind == WAKE:
            slot = arg
            nxt = slot + 1
            if nxt < n_slots[i]:
                wt = nxt * period[i] + jitter[i][nxt]
                if wt < duration:
                    push(heap, (wt, i, seq, WAKE, nxt))
                    seq += 1
            if busy[i]:
                if pending[i] < 0:
                    pending[i] = slot
                    deferred += 1
                else:
                    skipped += 1
            else:
                take(i, slot, t)

        elif kind == TX_END:
            if arg != epoch[i]:
                continue
            on_air[cur_chan[i]].remove(i)
            charge(i, cur_start[i], cur_end[i], tx_ma)
            if rx_power[i] < floor[i]:
                outcome = OUTCOME_BELOW_SENSITIVITY
                below_cnt += 1
            elif rx_power[i] >= cur_max_other[i] + capture_db:
                outcome = OUTCOME_DELIVERED
                delivered += 1
            else:
                outcome = OUTCOME_COLLIDED
                collided += 1
            if outcome == OUTCOME_DELIVERED:
                fcnt = cur_fcnt[i]
                dup = seen[i][fcnt]
                if dup:
                    duplicates += 1
                else:
                    seen[i][fcnt] = 1
                    delivered_unique[i] += 1
                if collect_del:
                    del_time.append(t)
                    del_node.append(i)
                    del_fcnt.append(fcnt)
                    del_attempt.append(cur_attempt[i])
                    del_chan.append(cur_chan[i])
                    del_dup.append(dup)
            if collect_att:
                att_start.append(cur_start[i])
                att_end.append(t)
                att_node.append(i)
                att_fcnt.append(cur_fcnt[i])
                att_no.append(cur_attempt[i])
                att_chan.append(cur_chan[i])
                att_outcome.append(outcome)
            cur_outcome[i] = outcome
            push(heap, (t + rx2_delay[i] + rx_window[i], i, seq, RESOLVE, epoch[i]))
            seq += 1

        elif kind == RESOLVE:
            if arg != epoch[i]:
                continue
            end = cur_end[i]
            w1 = end + rx1_delay[i]
            w2 = end + rx2_delay[i]
            charge(i, w1, w1 + rx_window[i], rx_ma)
            charge(i, w2, w2 + rx_window[i], rx_ma)
            got_through = cur_outcome[i] == OUTCOME_DELIVERED
            if confirmed[i]:
                acked = got_through
                if acked and ack_loss_prob > 0.0:
                    acked = ack_gen[i].random() >= ack_loss_prob
                if acked:
                    finish(i, t)
                else:
                    conflicts[i] += 1
                    attempt = cur_attempt[i]
                    if attempt < max_tx[i]:
                        u = backoff_gen[i].random()
                        lo = 1.0 * attempt
                        hi = 3.0 * attempt
                        start_attempt(i, attempt + 1, t + (lo + (hi - lo) * u))
                    else:
                        given_up += 1
                        node_given_up[i] += 1
                        gu_time.append(t)
                        gu_node.append(i)
                        gu_fcnt.append(cur_fcnt[i])
                        finish(i, t)
            else:
                if not got_through:
                    given_up += 1
                    node_given_up[i] += 1
                    gu_time.append(t)
                    gu_node.append(i)
                    gu_fcnt.append(cur_fcnt[i])
                finish(i, t)

        else:  # REBOOT
            resets[i] += 1
            epoch[i] += 1
            if busy[i]:
                aborted += 1
                if t < cur_end[i]:
                    # Attempt scheduled or on the air: silence it.
                    on_air[cur_chan[i]].remove(i)
                    if cur_start[i] < t:
                        charge(i, cur_start[i], t, tx_ma)
                    if collect_att:
                        att_start.append(cur_start[i])
                        att_end.append(t)
                        att_node.append(i)
                        att_fcnt.append(cur_fcnt[i])
                        att_no.append(cur_attempt[i])
                        att_chan.append(cur_chan[i])
                        att_outcome.append(OUTCOME_ABORTED)
                else:
                    # Between TX end and window close: charge the parts
                    # of the receive windows that already happened.
                    end = cur_end[i]
                    w1 = end + rx1_delay[i]
                    w2 = end + rx2_delay[i]
                    if w1 < t:
                        charge(i, w1, min(w1 + rx_window[i], t), rx_ma)
                    if w2 < t:
                        charge(i, w2, min(w2 + rx_window[i], t), rx_ma)
            busy[i] = False
            pending[i] = -1
            next_fcnt[i] = 0
            conflicts[i] = 0
            cur_max_other[i] = NO_INTERFERENCE_DBM
            seen[i] = bytearray(n_slots[i] + 2)

    out = EngineOutputs()
    out.tx_attempts = tx_attempts
    out.delivered = delivered
    out.collided = collided
    out.below_sensitivity = below_cnt
    out.duplicates_suppressed = duplicates
    out.given_up = given_up
    out.measurements_taken = measurements
    out.skipped_busy = skipped
    out.deferred = deferred
    out.aborted = aborted
    out.duty_wait_s = duty_wait
    out.node_conflicts = np.array(conflicts, dtype=np.int64)
    out.node_delivered_unique = np.array(delivered_unique, dtype=np.int64)
    out.node_given_up = np.array(node_given_up, dtype=np.int64)
    out.node_measurements = np.array(node_meas, dtype=np.int64)
    out.node_resets = np.array(resets, dtype=np.int64)
    out.node_active_charge_mas = np.array(active_charge, dtype=np.float64)
    out.node_active_s_within = np.array(active_within, dtype=np.float64)
    out.node_active_s_total = np.array(active_total, dtype=np.float64)
    if collect_meas:
        out.meas_node = np.frombuffer(meas_node, dtype=np.uint16)
        out.meas_fcnt = np.frombuffer(meas_fcnt, dtype=np.uint32)
        out.meas_slot = np.frombuffer(meas_slot, dtype=np.uint32)
        out.meas_time = np.frombuffer(meas_time, dtype=np.float64)
        out.meas_temp = np.frombuffer(meas_temp, dtype=np.int16)
        out.meas_rh = np.frombuffer(meas_rh, dtype=np.uint16)
        out.meas_mv = np.frombuffer(meas_mv, dtype=np.uint16)
        out.meas_conflicts = np.frombuffer(meas_conf, dtype=np.uint16)
    if collect_del:
        out.del_time = np.frombuffer(del_time, dtype=np.float64)
        out.del_node = np.frombuffer(del_node, dtype=np.uint16)
        out.del_fcnt = np.frombuffer(del_fcnt, dtype=np.uint32)
        out.del_attempt = np.frombuffer(del_attempt, dtype=np.uint8)
        out.del_chan = np.frombuffer(del_chan, dtype=np.uint8)
        out.del_dup = np.frombuffer(del_dup, dtype=np.uint8)
    if collect_att:
        out.att_start = np.frombuffer(att_start, dtype=np.float64)
        out.att_end = np.frombuffer(att_end, dtype=np.float64)
        out.att_node = np.frombuffer(att_node, dtype=np.uint16)
        out.att_fcnt = np.frombuffer(att_fcnt, dtype=np.uint32)
        out.att_no = np.frombuffer(att_no, dtype=np.uint8)
        out.att_chan = np.frombuffer(att_chan, dtype=np.uint8)
        out.att_outcome = np.frombuffer(att_outcome, dtype=np.uint8)
    out.gu_time = np.frombuffer(gu_time, dtype=np.float64)
    out.gu_node = np.frombuffer(gu_node, dtype=np.uint16)
    out.gu_fcnt = np.frombuffer(gu_fcnt, dtype=np.uint32)
    return out
