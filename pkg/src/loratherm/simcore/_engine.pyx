# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event engine.

Mirror of ``engine_py.run``: same event ordering, same floating-point
operation sequence, same random-stream consumption, so both engines
produce bit-identical outputs from one ``EngineInputs``. Any behavior
change must land in both files.
"""

import numpy as np

from cpython.mem cimport PyMem_Free, PyMem_Malloc, PyMem_Realloc
from libc.math cimport INFINITY

from .data import (
    EngineOutputs,
    OUTCOME_ABORTED,
    OUTCOME_BELOW_SENSITIVITY,
    OUTCOME_COLLIDED,
    OUTCOME_DELIVERED,
)

name = "compiled"

cdef int K_WAKE = 0
cdef int K_TX_END = 1
cdef int K_RESOLVE = 2
cdef int K_REBOOT = 3

cdef int OC_DELIVERED = OUTCOME_DELIVERED
cdef int OC_COLLIDED = OUTCOME_COLLIDED
cdef int OC_BELOW = OUTCOME_BELOW_SENSITIVITY
cdef int OC_ABORTED = OUTCOME_ABORTED

cdef double DUTY_EPS = 1e-9


cdef struct Heap:
    double* time
    int* node
    long long* seq
    int* kind
    long long* arg
    Py_ssize_t size
    Py_ssize_t cap


cdef int heap_reserve(Heap* h, Py_ssize_t cap) except -1:
    h.time = <double*> PyMem_Realloc(h.time, cap * sizeof(double))
    h.node = <int*> PyMem_Realloc(h.node, cap * sizeof(int))
    h.seq = <long long*> PyMem_Realloc(h.seq, cap * sizeof(long long))
    h.kind = <int*> PyMem_Realloc(h.kind, cap * sizeof(int))
    h.arg = <long long*> PyMem_Realloc(h.arg, cap * sizeof(long long))
    if h.time == NULL or h.node == NULL or h.seq == NULL or h.kind == NULL or h.arg == NULL:
        raise MemoryError()
    h.cap = cap
    return 0


cdef void heap_free(Heap* h):
    PyMem_Free(h.time)
    PyMem_Free(h.node)
    PyMem_Free(h.seq)
    PyMem_Free(h.kind)
    PyMem_Free(h.arg)


cdef inline bint heap_less(Heap* h, Py_ssize_t a, Py_ssize_t b):
    if h.time[a] != h.time[b]:
        return h.time[a] < h.time[b]
    if h.node[a] != h.node[b]:
        return h.node[a] < h.node[b]
    return h.seq[a] < h.seq[b]


cdef inline void heap_swap(Heap* h, Py_ssize_t a, Py_ssize_t b):
    cdef double td = h.time[a]
    cdef int ti = h.node[a]
    cdef long long tl = h.seq[a]
    cdef int tk = h.kind[a]
    cdef long long ta = h.arg[a]
    h.time[a] = h.time[b]; h.node[a] = h.node[b]; h.seq[a] = h.seq[b]
    h.kind[a] = h.kind[b]; h.arg[a] = h.arg[b]
    h.time[b] = td; h.node[b] = ti; h.seq[b] = tl; h.kind[b] = tk; h.arg[b] = ta


cdef int heap_push(Heap* h, double t, int node, long long seq, int kind, long long arg) except -1:
    cdef Py_ssize_t i, parent
    if h.size == h.cap:
        heap_reserve(h, h.cap * 2)
    i = h.size
    h.time[i] = t; h.node[i] = node; h.seq[i] = seq; h.kind[i] = kind; h.arg[i] = arg
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if heap_less(h, i, parent):
            heap_swap(h, i, parent)
            i = parent
        else:
            break
    return 0


cdef void heap_pop(Heap* h):
    cdef Py_ssize_t i = 0, left, right, best
    h.size -= 1
    if h.size == 0:
        return
    heap_swap(h, 0, h.size)
    while True:
        left = 2 * i + 1
        if left >= h.size:
            break
        best = left
        right = left + 1
        if right < h.size and heap_less(h, right, left):
            best = right
        if heap_less(h, best, i):
            heap_swap(h, i, best)
            i = best
        else:
            break


cdef class _Sim:
    cdef double duration, capture_db, ack_loss_prob, duty_window, duty_cap
    cdef double sleep_ma, run_ma, tx_ma, rx_ma
    cdef int n, channels
    cdef long long seq

    cdef double[::1] period, airtime, sense, rx1_delay, rx2_delay, rx_window
    cdef double[::1] rx_power, floor, battery_mas
    cdef long long[::1] sf, max_tx, fixed_chan, n_slots
    cdef unsigned char[::1] confirmed

    cdef long long[::1] slot_off, seen_off, chan_off, chan_len
    cdef double[::1] jit_flat
    cdef short[::1] temp_flat
    cdef unsigned short[::1] rh_flat
    cdef unsigned char[::1] chan_flat
    cdef unsigned char[::1] seen

    cdef long long[::1] duty_off, duty_cap_entries, duty_head, duty_size
    cdef double[::1] duty_starts, duty_airs, duty_used

    cdef unsigned char[::1] busy
    cdef long long[::1] pending, next_fcnt, conflicts, epoch, resets, chan_idx
    cdef long long[::1] cur_fcnt, cur_attempt, cur_chan, cur_outcome
    cdef double[::1] cur_start, cur_end, cur_max_other
    cdef double[::1] active_charge, active_within, active_total
    cdef long long[::1] delivered_unique, node_given_up, node_meas

    cdef int[:, ::1] onair
    cdef int[::1] onair_len

    cdef Heap heap

    cdef long long tx_attempts, delivered, collided, below_cnt, duplicates
    cdef long long given_up, measurements, skipped, deferred, aborted
    cdef double duty_wait

    cdef list chan_gen, backoff_gen, ack_gen
    cdef bint collect_meas, collect_del, collect_att

    # Record buffers: python array refs plus typed views and cursors.
    cdef object meas_node_py, meas_fcnt_py, meas_slot_py, meas_time_py
    cdef object meas_temp_py, meas_rh_py, meas_mv_py, meas_conf_py
    cdef unsigned short[::1] meas_node_v
    cdef unsigned int[::1] meas_fcnt_v, meas_slot_v
    cdef double[::1] meas_time_v
    cdef short[::1] meas_temp_v
    cdef unsigned short[::1] meas_rh_v, meas_mv_v, meas_conf_v
    cdef Py_ssize_t meas_n

    cdef object del_time_py, del_node_py, del_fcnt_py, del_attempt_py, del_chan_py, del_dup_py
    cdef double[::1] del_time_v
    cdef unsigned short[::1] del_node_v
    cdef unsigned int[::1] del_fcnt_v
    cdef unsigned char[::1] del_attempt_v, del_chan_v, del_dup_v
    cdef Py_ssize_t del_n, del_cap

    cdef object att_start_py, att_end_py, att_node_py, att_fcnt_py, att_no_py, att_chan_py, att_outcome_py
    cdef double[::1] att_start_v, att_end_v
    cdef unsigned short[::1] att_node_v
    cdef unsigned int[::1] att_fcnt_v
    cdef unsigned char[::1] att_no_v, att_chan_v, att_outcome_v
    cdef Py_ssize_t att_n, att_cap

    cdef object gu_time_py, gu_node_py, gu_fcnt_py
    cdef double[::1] gu_time_v
    cdef unsigned short[::1] gu_node_v
    cdef unsigned int[::1] gu_fcnt_v
    cdef Py_ssize_t gu_n

    def __cinit__(self):
        self.heap.time = NULL
        self.heap.node = NULL
        self.heap.seq = NULL
        self.heap.kind = NULL
        self.heap.arg = NULL
        self.heap.size = 0
        self.heap.cap = 0

    def __dealloc__(self):
        heap_free(&self.heap)

    cdef void _charge(self, int i, double a, double b, double ma):
        cdef double lo = a if a < self.duration else self.duration
        cdef double hi = b if b < self.duration else self.duration
        cdef double d = hi - lo
        if d > 0.0:
            self.active_charge[i] += ma * d
            self.active_within[i] += d
        self.active_total[i] += b - a

    cdef double _grant(self, int i, double air, double now):
        cdef long long base = self.duty_off[i]
        cdef long long head = self.duty_head[i]
        cdef long long size = self.duty_size[i]
        cdef double used = self.duty_used[i]
        cdef double cutoff = now - self.duty_window
        cdef double start, live_total
        cdef long long j, k
        while head < size and self.duty_starts[base + head] <= cutoff:
            used -= self.duty_airs[base + head]
            head += 1
        if head == size:
            used = 0.0
        live_total = used
        start = now
        j = head
        while used + air > self.duty_cap + DUTY_EPS and j < size:
            start = self.duty_starts[base + j] + self.duty_window
            used -= self.duty_airs[base + j]
            j += 1
        # Append; compact the ring when full (layout only, values unchanged).
        if size == self.duty_cap_entries[i]:
            for k in range(head, size):
                self.duty_starts[base + k - head] = self.duty_starts[base + k]
                self.duty_airs[base + k - head] = self.duty_airs[base + k]
            size -= head
            head = 0
        self.duty_starts[base + size] = start
        self.duty_airs[base + size] = air
        size += 1
        self.duty_used[i] = live_total + air
        self.duty_head[i] = head
        self.duty_size[i] = size
        return start

    cdef int _pick_channel(self, int i) except -1:
        cdef long long fc = self.fixed_chan[i]
        cdef long long idx
        if fc >= 0:
            return <int> fc
        idx = self.chan_idx[i]
        self.chan_idx[i] = idx + 1
        if idx < self.chan_len[i]:
            return <int> self.chan_flat[self.chan_off[i] + idx]
        return <int> int(self.chan_gen[i].integers(0, self.channels))

    cdef int _start_attempt(self, int i, long long attempt, double ready) except -1:
        cdef int ch = self._pick_channel(i)
        cdef double start = self._grant(i, self.airtime[i], ready)
        cdef double end = start + self.airtime[i]
        cdef double strongest = -INFINITY
        cdef double my_power = self.rx_power[i]
        cdef long long my_sf = self.sf[i]
        cdef int k, j
        self.duty_wait += start - ready
        self.tx_attempts += 1
        self.cur_attempt[i] = attempt
        self.cur_chan[i] = ch
        self.cur_start[i] = start
        self.cur_end[i] = end
        for k in range(self.onair_len[ch]):
            j = self.onair[ch, k]
            if self.sf[j] != my_sf:
                continue
            if start < self.cur_end[j] and self.cur_start[j] < end:
                if self.rx_power[j] > strongest:
                    strongest = self.rx_power[j]
                if my_power > self.cur_max_other[j]:
                    self.cur_max_other[j] = my_power
        self.cur_max_other[i] = strongest
        self.onair[ch, self.onair_len[ch]] = i
        self.onair_len[ch] += 1
        heap_push(&self.heap, end, i, self.seq, K_TX_END, self.epoch[i])
        self.seq += 1
        return 0

    cdef void _onair_remove(self, int ch, int i):
        cdef int k
        cdef int last = self.onair_len[ch] - 1
        for k in range(last + 1):
            if self.onair[ch, k] == i:
                self.onair[ch, k] = self.onair[ch, last]
                self.onair_len[ch] = last
                return

    cdef int _take(self, int i, long long slot, double t) except -1:
        cdef long long fcnt = self.next_fcnt[i]
        cdef double gap, consumed, volts
        self.next_fcnt[i] = fcnt + 1
        self.measurements += 1
        self.node_meas[i] += 1
        if self.collect_meas:
            gap = t - self.active_total[i]
            consumed = self.active_charge[i] + self.sleep_ma * (gap if gap > 0.0 else 0.0)
            volts = 4200.0 - 1200.0 * (consumed / self.battery_mas[i])
            if volts < 3000.0:
                volts = 3000.0
            self.meas_node_v[self.meas_n] = <unsigned short> i
            self.meas_fcnt_v[self.meas_n] = <unsigned int> fcnt
            self.meas_slot_v[self.meas_n] = <unsigned int> slot
            self.meas_time_v[self.meas_n] = t
            self.meas_temp_v[self.meas_n] = self.temp_flat[self.slot_off[i] + slot]
            self.meas_rh_v[self.meas_n] = self.rh_flat[self.slot_off[i] + slot]
            self.meas_mv_v[self.meas_n] = <unsigned short> (<long long> (volts + 0.5))
            self.meas_conf_v[self.meas_n] = <unsigned short> (self.conflicts[i] & 0xFFFF)
            self.meas_n += 1
        self.busy[i] = 1
        self.cur_fcnt[i] = fcnt
        self._charge(i, t, t + self.sense[i], self.run_ma)
        return self._start_attempt(i, 1, t + self.sense[i])

    cdef int _finish(self, int i, double t) except -1:
        cdef long long slot
        self.busy[i] = 0
        if self.pending[i] >= 0:
            slot = self.pending[i]
            self.pending[i] = -1
            return self._take(i, slot, t)
        return 0

    cdef object _grown(self, object old, Py_ssize_t cap, Py_ssize_t used):
        new = np.empty(cap, dtype=old.dtype)
        new[:used] = old[:used]
        return new

    def _grow_del(self):
        cdef Py_ssize_t cap = self.del_cap * 2
        cdef Py_ssize_t used = self.del_n
        self.del_time_py = self._grown(self.del_time_py, cap, used)
        self.del_node_py = self._grown(self.del_node_py, cap, used)
        self.del_fcnt_py = self._grown(self.del_fcnt_py, cap, used)
        self.del_attempt_py = self._grown(self.del_attempt_py, cap, used)
        self.del_chan_py = self._grown(self.del_chan_py, cap, used)
        self.del_dup_py = self._grown(self.del_dup_py, cap, used)
        self.del_time_v = self.del_time_py
        self.del_node_v = self.del_node_py
        self.del_fcnt_v = self.del_fcnt_py
        self.del_attempt_v = self.del_attempt_py
        self.del_chan_v = self.del_chan_py
        self.del_dup_v = self.del_dup_py
        self.del_cap = cap

    def _grow_att(self):
        cdef Py_ssize_t cap = self.att_cap * 2
        cdef Py_ssize_t used = self.att_n
        self.att_start_py = self._grown(self.att_start_py, cap, used)
        self.att_end_py = self._grown(self.att_end_py, cap, used)
        self.att_node_py = self._grown(self.att_node_py, cap, used)
        self.att_fcnt_py = self._grown(self.att_fcnt_py, cap, used)
        self.att_no_py = self._grown(self.att_no_py, cap, used)
        self.att_chan_py = self._grown(self.att_chan_py, cap, used)
        self.att_outcome_py = self._grown(self.att_outcome_py, cap, used)
        self.att_start_v = self.att_start_py
        self.att_end_v = self.att_end_py
        self.att_node_v = self.att_node_py
        self.att_fcnt_v = self.att_fcnt_py
        self.att_no_v = self.att_no_py
        self.att_chan_v = self.att_chan_py
        self.att_outcome_v = self.att_outcome_py
        self.att_cap = cap

    cdef int _append_att(self, double start, double end, int i, long long fcnt,
                         long long attempt, long long ch, int outcome) except -1:
        if self.att_n >= self.att_cap:
            self._grow_att()
        self.att_start_v[self.att_n] = start
        self.att_end_v[self.att_n] = end
        self.att_node_v[self.att_n] = <unsigned short> i
        self.att_fcnt_v[self.att_n] = <unsigned int> fcnt
        self.att_no_v[self.att_n] = <unsigned char> attempt
        self.att_chan_v[self.att_n] = <unsigned char> ch
        self.att_outcome_v[self.att_n] = <unsigned char> outcome
        self.att_n += 1
        return 0

    cdef int run_loop(self) except -1:
        cdef Heap* h = &self.heap
        cdef double t, wt, end, w1, w2, u, lo, hi, seg_end
        cdef int i, kind, outcome
        cdef long long arg, slot, nxt, fcnt, attempt
        cdef bint got_through, acked, dup

        while h.size > 0:
            t = h.time[0]
            i = h.node[0]
            kind = h.kind[0]
            arg = h.arg[0]
            heap_pop(h)

            if kind == K_WAKE:
                slot = arg
                nxt = slot + 1
                if nxt < self.n_slots[i]:
                    wt = nxt * self.period[i] + self.jit_flat[self.slot_off[i] + nxt]
                    if wt < self.duration:
                        heap_push(h, wt, i, self.seq, K_WAKE, nxt)
                        self.seq += 1
                if self.busy[i]:
                    if self.pending[i] < 0:
                        self.pending[i] = slot
                        self.deferred += 1
                    else:
                        self.skipped += 1
                else:
                    self._take(i, slot, t)

            elif kind == K_TX_END:
                if arg != self.epoch[i]:
                    continue
                self._onair_remove(<int> self.cur_chan[i], i)
                self._charge(i, self.cur_start[i], self.cur_end[i], self.tx_ma)
                if self.rx_power[i] < self.floor[i]:
                    outcome = OC_BELOW
                    self.below_cnt += 1
                elif self.rx_power[i] >= self.cur_max_other[i] + self.capture_db:
                    outcome = OC_DELIVERED
                    self.delivered += 1
                else:
                    outcome = OC_COLLIDED
                    self.collided += 1
                if outcome == OC_DELIVERED:
                    fcnt = self.cur_fcnt[i]
                    dup = self.seen[self.seen_off[i] + fcnt]
                    if dup:
                        self.duplicates += 1
                    else:
                        self.seen[self.seen_off[i] + fcnt] = 1
                        self.delivered_unique[i] += 1
                    if self.collect_del:
                        if self.del_n >= self.del_cap:
                            self._grow_del()
                        self.del_time_v[self.del_n] = t
                        self.del_node_v[self.del_n] = <unsigned short> i
                        self.del_fcnt_v[self.del_n] = <unsigned int> fcnt
                        self.del_attempt_v[self.del_n] = <unsigned char> self.cur_attempt[i]
                        self.del_chan_v[self.del_n] = <unsigned char> self.cur_chan[i]
                        self.del_dup_v[self.del_n] = 1 if dup else 0
                        self.del_n += 1
                if self.collect_att:
                    self._append_att(self.cur_start[i], t, i, self.cur_fcnt[i],
                                     self.cur_attempt[i], self.cur_chan[i], outcome)
                self.cur_outcome[i] = outcome
                heap_push(h, t + self.rx2_delay[i] + self.rx_window[i], i, self.seq,
                          K_RESOLVE, self.epoch[i])
                self.seq += 1

            elif kind == K_RESOLVE:
                if arg != self.epoch[i]:
                    continue
                end = self.cur_end[i]
                w1 = end + self.rx1_delay[i]
                w2 = end + self.rx2_delay[i]
                self._charge(i, w1, w1 + self.rx_window[i], self.rx_ma)
                self._charge(i, w2, w2 + self.rx_window[i], self.rx_ma)
                got_through = self.cur_outcome[i] == OC_DELIVERED
                if self.confirmed[i]:
                    acked = got_through
                    if acked and self.ack_loss_prob > 0.0:
                        acked = self.ack_gen[i].random() >= self.ack_loss_prob
                    if acked:
                        self._finish(i, t)
                    else:
                        self.conflicts[i] += 1
                        attempt = self.cur_attempt[i]
                        if attempt < self.max_tx[i]:
                            u = self.backoff_gen[i].random()
                            lo = 1.0 * attempt
                            hi = 3.0 * attempt
                            self._start_attempt(i, attempt + 1, t + (lo + (hi - lo) * u))
                        else:
                            self.given_up += 1
                            self.node_given_up[i] += 1
                            self.gu_time_v[self.gu_n] = t
                            self.gu_node_v[self.gu_n] = <unsigned short> i
                            self.gu_fcnt_v[self.gu_n] = <unsigned int> self.cur_fcnt[i]
                            self.gu_n += 1
                            self._finish(i, t)
                else:
                    if not got_through:
                        self.given_up += 1
                        self.node_given_up[i] += 1
                        self.gu_time_v[self.gu_n] = t
                        self.gu_node_v[self.gu_n] = <unsigned short> i
                        self.gu_fcnt_v[self.gu_n] = <unsigned int> self.cur_fcnt[i]
                        self.gu_n += 1
                    self._finish(i, t)

            else:  # K_REBOOT
                self.resets[i] += 1
                self.epoch[i] += 1
                if self.busy[i]:
                    self.aborted += 1
                    if t < self.cur_end[i]:
                        self._onair_remove(<int> self.cur_chan[i], i)
                        if self.cur_start[i] < t:
                            self._charge(i, self.cur_start[i], t, self.tx_ma)
                        if self.collect_att:
                            self._append_att(self.cur_start[i], t, i, self.cur_fcnt[i],
                                             self.cur_attempt[i], self.cur_chan[i], OC_ABORTED)
                    else:
                        end = self.cur_end[i]
                        w1 = end + self.rx1_delay[i]
                        w2 = end + self.rx2_delay[i]
                        if w1 < t:
                            seg_end = w1 + self.rx_window[i]
                            if t < seg_end:
                                seg_end = t
                            self._charge(i, w1, seg_end, self.rx_ma)
                        if w2 < t:
                            seg_end = w2 + self.rx_window[i]
                            if t < seg_end:
                                seg_end = t
                            self._charge(i, w2, seg_end, self.rx_ma)
                self.busy[i] = 0
                self.pending[i] = -1
                self.next_fcnt[i] = 0
                self.conflicts[i] = 0
                self.cur_max_other[i] = -INFINITY
                for slot in range(self.seen_off[i], self.seen_off[i] + self.n_slots[i] + 2):
                    self.seen[slot] = 0
        return 0


def run(object inp):
    cdef _Sim s = _Sim()
    cdef int n = inp.n_nodes
    cdef int i
    cdef long long total_slots

    s.n = n
    s.duration = inp.duration_s
    s.channels = inp.channels
    s.capture_db = inp.capture_db
    s.ack_loss_prob = inp.ack_loss_prob
    s.duty_window = inp.duty_window_s
    s.duty_cap = inp.duty_capacity_s
    s.sleep_ma = inp.sleep_ma
    s.run_ma = inp.run_ma
    s.tx_ma = inp.tx_ma
    s.rx_ma = inp.rx_ma

    s.period = np.ascontiguousarray(inp.period, dtype=np.float64)
    s.airtime = np.ascontiguousarray(inp.airtime, dtype=np.float64)
    s.sense = np.ascontiguousarray(inp.sense, dtype=np.float64)
    s.rx1_delay = np.ascontiguousarray(inp.rx1_delay, dtype=np.float64)
    s.rx2_delay = np.ascontiguousarray(inp.rx2_delay, dtype=np.float64)
    s.rx_window = np.ascontiguousarray(inp.rx_window, dtype=np.float64)
    s.rx_power = np.ascontiguousarray(inp.rx_power, dtype=np.float64)
    s.floor = np.ascontiguousarray(inp.floor, dtype=np.float64)
    s.battery_mas = np.ascontiguousarray(inp.battery_mas, dtype=np.float64)
    s.sf = np.ascontiguousarray(inp.sf, dtype=np.int64)
    s.max_tx = np.ascontiguousarray(inp.max_tx, dtype=np.int64)
    s.fixed_chan = np.ascontiguousarray(inp.fixed_chan, dtype=np.int64)
    s.n_slots = np.ascontiguousarray(inp.n_slots, dtype=np.int64)
    s.confirmed = np.ascontiguousarray(inp.confirmed, dtype=np.uint8)

    slot_off_py = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(inp.n_slots, out=slot_off_py[1:])
    s.slot_off = slot_off_py
    total_slots = slot_off_py[n]

    s.jit_flat = np.ascontiguousarray(np.concatenate(inp.jitter), dtype=np.float64)
    s.temp_flat = np.ascontiguousarray(np.concatenate(inp.temp_centi), dtype=np.int16)
    s.rh_flat = np.ascontiguousarray(np.concatenate(inp.rh_centi), dtype=np.uint16)

    chan_lens = [0 if a is None else len(a) for a in inp.chan_bulk]
    chan_off_py = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.asarray(chan_lens, dtype=np.int64), out=chan_off_py[1:])
    s.chan_off = chan_off_py
    s.chan_len = np.asarray(chan_lens, dtype=np.int64)
    pieces = [a for a in inp.chan_bulk if a is not None]
    if pieces:
        s.chan_flat = np.ascontiguousarray(np.concatenate(pieces), dtype=np.uint8)
    else:
        s.chan_flat = np.zeros(1, dtype=np.uint8)

    seen_off_py = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(inp.n_slots + 2, out=seen_off_py[1:])
    s.seen_off = seen_off_py
    s.seen = np.zeros(int(seen_off_py[n]), dtype=np.uint8)

    cap_entries_py = (inp.duty_capacity_s / inp.airtime).astype(np.int64) + 8
    duty_off_py = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(cap_entries_py, out=duty_off_py[1:])
    s.duty_cap_entries = cap_entries_py
    s.duty_off = duty_off_py
    s.duty_starts = np.zeros(int(duty_off_py[n]), dtype=np.float64)
    s.duty_airs = np.zeros(int(duty_off_py[n]), dtype=np.float64)
    s.duty_head = np.zeros(n, dtype=np.int64)
    s.duty_size = np.zeros(n, dtype=np.int64)
    s.duty_used = np.zeros(n, dtype=np.float64)

    s.busy = np.zeros(n, dtype=np.uint8)
    s.pending = np.full(n, -1, dtype=np.int64)
    s.next_fcnt = np.zeros(n, dtype=np.int64)
    s.conflicts = np.zeros(n, dtype=np.int64)
    s.epoch = np.zeros(n, dtype=np.int64)
    s.resets = np.zeros(n, dtype=np.int64)
    s.chan_idx = np.zeros(n, dtype=np.int64)
    s.cur_fcnt = np.zeros(n, dtype=np.int64)
    s.cur_attempt = np.zeros(n, dtype=np.int64)
    s.cur_chan = np.zeros(n, dtype=np.int64)
    s.cur_outcome = np.zeros(n, dtype=np.int64)
    s.cur_start = np.zeros(n, dtype=np.float64)
    s.cur_end = np.zeros(n, dtype=np.float64)
    s.cur_max_other = np.full(n, -np.inf, dtype=np.float64)
    s.active_charge = np.zeros(n, dtype=np.float64)
    s.active_within = np.zeros(n, dtype=np.float64)
    s.active_total = np.zeros(n, dtype=np.float64)
    s.delivered_unique = np.zeros(n, dtype=np.int64)
    s.node_given_up = np.zeros(n, dtype=np.int64)
    s.node_meas = np.zeros(n, dtype=np.int64)

    s.onair = np.zeros((inp.channels, n), dtype=np.int32)
    s.onair_len = np.zeros(inp.channels, dtype=np.int32)

    s.chan_gen = list(inp.chan_gen)
    s.backoff_gen = list(inp.backoff_gen)
    s.ack_gen = list(inp.ack_gen)

    s.collect_meas = inp.collect_measurements
    s.collect_del = inp.collect_deliveries
    s.collect_att = inp.collect_attempts

    cdef Py_ssize_t meas_cap = int(total_slots) + 1
    if s.collect_meas:
        s.meas_node_py = np.empty(meas_cap, dtype=np.uint16)
        s.meas_fcnt_py = np.empty(meas_cap, dtype=np.uint32)
        s.meas_slot_py = np.empty(meas_cap, dtype=np.uint32)
        s.meas_time_py = np.empty(meas_cap, dtype=np.float64)
        s.meas_temp_py = np.empty(meas_cap, dtype=np.int16)
        s.meas_rh_py = np.empty(meas_cap, dtype=np.uint16)
        s.meas_mv_py = np.empty(meas_cap, dtype=np.uint16)
        s.meas_conf_py = np.empty(meas_cap, dtype=np.uint16)
        s.meas_node_v = s.meas_node_py
        s.meas_fcnt_v = s.meas_fcnt_py
        s.meas_slot_v = s.meas_slot_py
        s.meas_time_v = s.meas_time_py
        s.meas_temp_v = s.meas_temp_py
        s.meas_rh_v = s.meas_rh_py
        s.meas_mv_v = s.meas_mv_py
        s.meas_conf_v = s.meas_conf_py
    s.meas_n = 0

    if s.collect_del:
        s.del_cap = meas_cap + 4096
        s.del_time_py = np.empty(s.del_cap, dtype=np.float64)
        s.del_node_py = np.empty(s.del_cap, dtype=np.uint16)
        s.del_fcnt_py = np.empty(s.del_cap, dtype=np.uint32)
        s.del_attempt_py = np.empty(s.del_cap, dtype=np.uint8)
        s.del_chan_py = np.empty(s.del_cap, dtype=np.uint8)
        s.del_dup_py = np.empty(s.del_cap, dtype=np.uint8)
        s.del_time_v = s.del_time_py
        s.del_node_v = s.del_node_py
        s.del_fcnt_v = s.del_fcnt_py
        s.del_attempt_v = s.del_attempt_py
        s.del_chan_v = s.del_chan_py
        s.del_dup_v = s.del_dup_py
    s.del_n = 0

    if s.collect_att:
        s.att_cap = meas_cap + 65536
        s.att_start_py = np.empty(s.att_cap, dtype=np.float64)
        s.att_end_py = np.empty(s.att_cap, dtype=np.float64)
        s.att_node_py = np.empty(s.att_cap, dtype=np.uint16)
        s.att_fcnt_py = np.empty(s.att_cap, dtype=np.uint32)
        s.att_no_py = np.empty(s.att_cap, dtype=np.uint8)
        s.att_chan_py = np.empty(s.att_cap, dtype=np.uint8)
        s.att_outcome_py = np.empty(s.att_cap, dtype=np.uint8)
        s.att_start_v = s.att_start_py
        s.att_end_v = s.att_end_py
        s.att_node_v = s.att_node_py
        s.att_fcnt_v = s.att_fcnt_py
        s.att_no_v = s.att_no_py
        s.att_chan_v = s.att_chan_py
        s.att_outcome_v = s.att_outcome_py
    s.att_n = 0

    # Abandoned-frame buffer: at most one entry per frame taken.
    s.gu_time_py = np.empty(meas_cap, dtype=np.float64)
    s.gu_node_py = np.empty(meas_cap, dtype=np.uint16)
    s.gu_fcnt_py = np.empty(meas_cap, dtype=np.uint32)
    s.gu_time_v = s.gu_time_py
    s.gu_node_v = s.gu_node_py
    s.gu_fcnt_v = s.gu_fcnt_py
    s.gu_n = 0

    heap_reserve(&s.heap, 4 * n + 4 * len(inp.reboots) + 64)
    s.seq = 0
    cdef double t0
    for i in range(n):
        if s.n_slots[i] > 0:
            t0 = s.jit_flat[s.slot_off[i]]
            if t0 < s.duration:
                heap_push(&s.heap, t0, i, s.seq, K_WAKE, 0)
                s.seq += 1
    for t_rb, i_rb in inp.reboots:
        heap_push(&s.heap, t_rb, i_rb, s.seq, K_REBOOT, 0)
        s.seq += 1

    s.run_loop()

    out = EngineOutputs()
    out.tx_attempts = int(s.tx_attempts)
    out.delivered = int(s.delivered)
    out.collided = int(s.collided)
    out.below_sensitivity = int(s.below_cnt)
    out.duplicates_suppressed = int(s.duplicates)
    out.given_up = int(s.given_up)
    out.measurements_taken = int(s.measurements)
    out.skipped_busy = int(s.skipped)
    out.deferred = int(s.deferred)
    out.aborted = int(s.aborted)
    out.duty_wait_s = float(s.duty_wait)
    out.node_conflicts = np.asarray(s.conflicts).copy()
    out.node_delivered_unique = np.asarray(s.delivered_unique).copy()
    out.node_given_up = np.asarray(s.node_given_up).copy()
    out.node_measurements = np.asarray(s.node_meas).copy()
    out.node_resets = np.asarray(s.resets).copy()
    out.node_active_charge_mas = np.asarray(s.active_charge).copy()
    out.node_active_s_within = np.asarray(s.active_within).copy()
    out.node_active_s_total = np.asarray(s.active_total).copy()
    if s.collect_meas:
        out.meas_node = s.meas_node_py[: s.meas_n]
        out.meas_fcnt = s.meas_fcnt_py[: s.meas_n]
        out.meas_slot = s.meas_slot_py[: s.meas_n]
        out.meas_time = s.meas_time_py[: s.meas_n]
        out.meas_temp = s.meas_temp_py[: s.meas_n]
        out.meas_rh = s.meas_rh_py[: s.meas_n]
        out.meas_mv = s.meas_mv_py[: s.meas_n]
        out.meas_conflicts = s.meas_conf_py[: s.meas_n]
    if s.collect_del:
        out.del_time = s.del_time_py[: s.del_n]
        out.del_node = s.del_node_py[: s.del_n]
        out.del_fcnt = s.del_fcnt_py[: s.del_n]
        out.del_attempt = s.del_attempt_py[: s.del_n]
        out.del_chan = s.del_chan_py[: s.del_n]
        out.del_dup = s.del_dup_py[: s.del_n]
    if s.collect_att:
        out.att_start = s.att_start_py[: s.att_n]
        out.att_end = s.att_end_py[: s.att_n]
        out.att_node = s.att_node_py[: s.att_n]
        out.att_fcnt = s.att_fcnt_py[: s.att_n]
        out.att_no = s.att_no_py[: s.att_n]
        out.att_chan = s.att_chan_py[: s.att_n]
        out.att_outcome = s.att_outcome_py[: s.att_n]
    out.gu_time = s.gu_time_py[: s.gu_n]
    out.gu_node = s.gu_node_py[: s.gu_n]
    out.gu_fcnt = s.gu_fcnt_py[: s.gu_n]
    return out
