"""RF signal generator channel: timed FIFOs, carrier, envelope memory, mixer.

Time is kept as an absolute cycle count; 32-bit schedule times written by
the guest are unwrapped against the current cycle (+/- 2**31 window).
Samples are computed lazily over spans of constant parameters, so an idle
or untraced channel costs nothing per cycle.
"""

import heapq
from collections import deque

import numpy as np

from . import kernels
from . import trig as trigmod
from .bus import (Memory, Stall, SG_AMP, SG_DURATION, SG_ENV_START, SG_ERRFLAGS,
                  SG_FLAGS, SG_FREQ, SG_PHASE, SG_T0)
from .fixedpoint import M32, s16

PORTS = ("freq", "phase", "amp", "env", "dur")
P_FREQ, P_PHASE, P_AMP, P_ENV, P_DUR = range(5)
DEFAULT_LATENCIES = (6, 6, 4, 4, 4)

ERR_SCHED_PAST = 0x01
ERR_ORDER = 0x02
ERR_ENV_CLAMP = 0x04
ERR_MUX_DISABLED = 0x08
ERR_RO_WRITE = 0x10

ERROR_NAMES = {ERR_SCHED_PAST: "scheduling-in-past", ERR_ORDER: "order-violation",
               ERR_ENV_CLAMP: "envelope-clamped", ERR_MUX_DISABLED: "multiplex-disabled",
               ERR_RO_WRITE: "read-only-write"}


class SchedulingInPast(Exception):
    pass


class OrderViolation(Exception):
    pass


_FAR = 1 << 62


def unwrap(now, word):
    """Absolute cycle for a 32-bit RefTime ``word`` nearest to ``now``."""
    d = (word - now) & M32
    if d >= 0x8000_0000:
        d -= 1 << 32
    return now + d


def _pow2_at_least(n):
    p = 256
    while p < n:
        p <<= 1
    return p


class SignalGenerator:
    def __init__(self, index=0, samples_per_cycle=16, trig=None, latencies=DEFAULT_LATENCIES,
                 add_trig_latency=True, fifo_depth=16, env_capacity=4096, multiplex=True,
                 env_init="rect", events=None):
        if len(latencies) != 5 or min(latencies) < 0:
            raise ValueError("latencies must be five non-negative cycle counts")
        if env_capacity < 1 or env_capacity > 0x8000:
            raise ValueError("envelope capacity must be in [1, 32768]")
        self.index = index
        self.S = samples_per_cycle
        self.trig = trig or trigmod.lut(12)
        self.base_latencies = tuple(latencies)
        extra = self.trig.latency if add_trig_latency else 0
        self.latencies = tuple(l + extra for l in latencies)
        self.depth = fifo_depth
        self.multiplex = multiplex
        self.env_capacity = env_capacity
        self.env_init = env_init
        self.env = Memory(_pow2_at_least(2 * env_capacity))
        self.env.on_write = self._env_dirty
        self.events = events if events is not None else []
        self.drive = None       # callback(t_lo, t_hi, freq, sample_sum)
        self.on_window = None   # callback(g0, duration)
        self.trace = None       # list of (g_start, int32 samples) when tracing
        self._targs = self.trig.args()
        self.reset()

    # -- state ---------------------------------------------------------------

    def reset(self, clear_env=True):
        self.now = 0
        self.fifos = [[deque() for _ in PORTS] for _ in range(2)]
        self.last_t0 = [[None] * 5 for _ in range(2)]
        self.bank_sel = 0
        self.mux_pending = None
        self._pipe = []
        self._next_rel = _FAR
        self._seq = 0
        self.freq = 0
        self.phase = 0
        self.amp = 0
        self.env_start = 0
        self.win_g0 = 0
        self.win_end = 0
        self.win_env = 0
        self.err = 0
        self.regs = {"freq": 0, "phase": 0, "amp": 0, "env": 0, "dur": 0, "flags": 0}
        self.last_commit_t0 = 0
        if self.trace is not None:
            self.trace = []
        if clear_env:
            self.env.data[:] = bytes(self.env.size)
            if self.env_init == "rect":
                self.env.data[:2 * self.env_capacity] = b"\xff\x7f" * self.env_capacity
        self._env_dirty()

    def _env_dirty(self, off=None):
        self._env_arr = None

    def envelope(self):
        if self._env_arr is None:
            raw = np.frombuffer(bytes(self.env.data[:2 * self.env_capacity]), dtype="<i2")
            self._env_arr = raw.astype(np.int32)
        return self._env_arr

    def load_envelope(self, samples, start=0):
        arr = np.asarray(samples, dtype="<i2")
        if start < 0 or start + len(arr) > self.env_capacity:
            raise ValueError("envelope does not fit in envelope memory")
        self.env.data[2 * start:2 * (start + len(arr))] = arr.tobytes()
        self._env_dirty()

    def busy(self):
        if self._pipe or self.mux_pending is not None:
            return True
        for bank in self.fifos:
            for q in bank:
                if q:
                    return True
        return self.win_end > self.S * self.now or self.trace is not None

    # -- scheduling ------------------------------------------------------------

    def occupancy(self, bank, port, now):
        q = self.fifos[bank][port]
        n = len(q)
        for rel, _, _ in q:
            if rel > now:
                break
            n -= 1
        return n

    def _slot_free(self, bank, ports, now):
        """First cycle at which every port in ``ports`` has a free slot."""
        until = now + 1
        for p in ports:
            q = self.fifos[bank][p]
            pending = [rel for rel, _, _ in q if rel > now]
            if len(pending) >= self.depth:
                until = max(until, pending[len(pending) - self.depth])
        return until

    def schedule_param(self, bank, port, t0_word, value, now):
        """Queue one parameter; raises Stall, SchedulingInPast or OrderViolation."""
        self.commit({PORTS[port]: value}, t0_word, bank, now)

    def commit(self, values, t0_word, bank, now):
        """Atomically queue several ports with a common t0.

        Raises ``Stall`` when any target FIFO is full; on a past or
        out-of-order time the whole commit is dropped and a sticky flag set.
        """
        if bank and not self.multiplex:
            self.err |= ERR_MUX_DISABLED
            self.events.append(("sg_error", now, self.index, "multiplex-disabled"))
            return "mux"
        ports = [PORTS.index(k) for k in values]
        for p in ports:
            if self.occupancy(bank, p, now) >= self.depth:
                raise Stall(self._slot_free(bank, ports, now))
        t0 = unwrap(now, t0_word)
        for p in ports:
            if t0 - self.latencies[p] < now:
                self.err |= ERR_SCHED_PAST
                self.events.append(("sg_error", now, self.index, "scheduling-in-past"))
                raise SchedulingInPast(f"t0={t0} port={PORTS[p]} now={now}")
            last = self.last_t0[bank][p]
            if last is not None and t0 < last:
                self.err |= ERR_ORDER
                self.events.append(("sg_error", now, self.index, "order-violation"))
                raise OrderViolation(f"t0={t0} after {last} on port {PORTS[p]}")
        for p, (k, v) in zip(ports, values.items()):
            rel = t0 - self.latencies[p]
            self.fifos[bank][p].append((rel, t0, v))
            if rel < self._next_rel:
                self._next_rel = rel
            self.last_t0[bank][p] = t0
        self.last_commit_t0 = t0
        self.events.append(("commit", now, self.index, bank, t0))
        return "ok"

    def issue(self, fields, t0_word, now):
        """Pulse-instruction path: all five ports from the decoded fields."""
        vals = {"freq": fields.freq, "phase": fields.phase, "amp": s16(fields.amp),
                "env": fields.env_start, "dur": fields.duration}
        return self._commit_checked(vals, t0_word, fields.flags & 1, now)

    def _commit_checked(self, vals, t0_word, bank, now):
        dur = vals.get("dur", 0)
        if vals.get("env", 0) + dur > self.env_capacity:
            self.err |= ERR_ENV_CLAMP
        try:
            return self.commit(vals, t0_word, bank, now)
        except SchedulingInPast:
            return "past"
        except OrderViolation:
            return "order"

    def set_multiplex(self, bank_bit, now):
        """Select the bank for releases from the next cycle on."""
        if not self.multiplex:
            self.err |= ERR_MUX_DISABLED
            self.events.append(("sg_error", now, self.index, "multiplex-disabled"))
            return False
        self.mux_pending = (now + 1, bank_bit & 1)
        self.events.append(("mux", now, self.index, bank_bit & 1))
        return True

    # -- MMIO -----------------------------------------------------------------

    def mmio_read(self, off, now=0):
        r = self.regs
        if off == SG_FREQ:
            return r["freq"]
        if off == SG_FLAGS:
            return r["flags"]
        if off == SG_PHASE:
            return r["phase"]
        if off == SG_AMP:
            return r["amp"] & 0xFFFF
        if off == SG_ENV_START:
            return r["env"]
        if off == SG_DURATION:
            return r["dur"]
        if off == SG_T0:
            return self.last_commit_t0 & M32
        if off == SG_ERRFLAGS:
            return self.err
        return 0

    def mmio_write(self, off, value, now=0):
        """Returns the commit status for T0 writes, else None."""
        r = self.regs
        if off == SG_FREQ:
            r["freq"] = value
        elif off == SG_FLAGS:
            r["flags"] = value & 0xF
        elif off == SG_PHASE:
            r["phase"] = value
        elif off == SG_AMP:
            r["amp"] = s16(value)
        elif off == SG_ENV_START:
            r["env"] = value & 0xFFFF
        elif off == SG_DURATION:
            r["dur"] = value & 0xFFFF
        elif off == SG_T0:
            vals = {"freq": r["freq"], "phase": r["phase"], "amp": r["amp"],
                    "env": r["env"], "dur": r["dur"]}
            return self._commit_checked(vals, value, r["flags"] & 1, now)
        elif off == SG_ERRFLAGS:
            self.err &= ~value
        else:
            self.err |= ERR_RO_WRITE
        return None

    # -- datapath ----------------------------------------------------------------

    def next_event(self):
        """Earliest cycle at which an output parameter or the bank selection changes.

        Releases are not events of their own: an entry's fate is decided by
        the bank selected at its release cycle, and the selection only
        changes at a multiplex event, so releases are settled lazily at the
        next application or multiplex event.
        """
        best = None
        if self.mux_pending is not None:
            best = self.mux_pending[0]
        for bank in self.fifos:
            for q in bank:
                if q and (best is None or q[0][1] < best):
                    best = q[0][1]
        if self._pipe and (best is None or self._pipe[0][0] < best):
            best = self._pipe[0][0]
        return best

    def _release(self, t):
        """Move entries with release cycle <= ``t`` into the application pipe."""
        if t < self._next_rel:
            return
        sel = self.bank_sel
        events = self.events
        nxt = _FAR
        for b, bank in enumerate(self.fifos):
            for p, q in enumerate(bank):
                while q and q[0][0] <= t:
                    rel, t0, v = q.popleft()
                    if b == sel:
                        events.append(("release", rel, self.index, PORTS[p], t0))
                        self._seq += 1
                        heapq.heappush(self._pipe, (t0, p, self._seq, v))
                    else:
                        events.append(("bank_drop", rel, self.index, b, PORTS[p], t0))
                if q and q[0][0] < nxt:
                    nxt = q[0][0]
        self._next_rel = nxt

    def _events_at(self, t):
        mp = self.mux_pending
        if mp is not None and mp[0] <= t:
            self._release(mp[0] - 1)
            self.bank_sel = mp[1]
            self.mux_pending = None
        self._release(t)
        pipe = self._pipe
        while pipe and pipe[0][0] <= t:
            _, p, _, v = heapq.heappop(pipe)
            if p == P_FREQ:
                self.freq = v & M32
            elif p == P_PHASE:
                self.phase = v & M32
            elif p == P_AMP:
                self.amp = v
            elif p == P_ENV:
                self.env_start = v
            else:
                g0 = self.S * t
                self.win_g0 = g0
                self.win_end = g0 + v
                self.win_env = self.env_start
                self.events.append(("pulse_start", t, self.index, v, self.amp, self.freq))
                if self.on_window is not None:
                    self.on_window(g0, v)

    def advance(self, t_end):
        """Process cycles [now, t_end)."""
        while self.now < t_end:
            t = self.now
            self._events_at(t)
            nxt = self.next_event()
            u = t_end if nxt is None or nxt > t_end else nxt
            if u <= t:
                u = t + 1
            self._emit(t, u)
            self.now = u

    def _emit(self, t, u):
        S = self.S
        lo, hi = S * t, S * u
        a = max(lo, self.win_g0)
        b = min(hi, self.win_end)
        tr = self.trace
        if a < b:
            idx0 = self.win_env + (a - self.win_g0)
            if idx0 + (b - a) > self.env_capacity:
                if not self.err & ERR_ENV_CLAMP:
                    self.events.append(("sg_error", t, self.index, "envelope-clamped"))
                self.err |= ERR_ENV_CLAMP
            if tr is not None or self.drive is not None:
                out = np.zeros(hi - lo, dtype=np.int32) if tr is not None else np.empty(b - a, dtype=np.int32)
                view = out[a - lo:b - lo] if tr is not None else out
                total, _ = kernels.mix(view, a, b - a, self.freq, self.phase, self.envelope(),
                                       idx0, self.amp, *self._targs)
                if self.drive is not None:
                    self.drive(t, u, self.freq, total)
                if tr is not None:
                    tr.append((lo, out))
                return
        if tr is not None:
            tr.append((lo, np.zeros(hi - lo, dtype=np.int32)))

    def tick(self):
        """Advance one cycle and return its S output samples."""
        keep = self.trace
        self.trace = []
        try:
            self.advance(self.now + 1)
            _, out = self.trace[0]
        finally:
            self.trace = keep
        if keep is not None:
            keep.append((self.S * (self.now - 1), out))
        return out

    def render(self, t_end):
        """Advance to ``t_end`` and return all samples since ``now``."""
        keep = self.trace
        self.trace = []
        g0 = self.S * self.now
        try:
            self.advance(t_end)
            chunks = self.trace
        finally:
            self.trace = keep
        if keep is not None:
            keep.extend(chunks)
        if not chunks:
            return np.zeros(0, dtype=np.int32)
        out = np.concatenate([c for _, c in chunks])
        assert chunks[0][0] == g0
        return out

    def traced_samples(self):
        """Concatenate the trace into (first_global_index, samples)."""
        if not self.trace:
            return 0, np.zeros(0, dtype=np.int32)
        return self.trace[0][0], np.concatenate([c for _, c in self.trace])
