"""Readout decoder: IQ demodulation, boxcar integration, threshold decision.

Samples are pulled from a source callable ``source(channel, h0, n)`` for
the armed window only. The result becomes visible to the CPU one cycle
after the finalize stage, i.e. two cycles after the cycle holding the last
window sample.
"""

import numpy as np

from . import kernels
from . import trig as trigmod
from .bus import (Memory, RD_ARM, RD_CAPTURE_COUNT, RD_CAPTURE_CTRL, RD_DEC_FREQ,
                  RD_DEC_PHASE, RD_ERRFLAGS, RD_I, RD_MULTIPLEX, RD_Q, RD_RESULT,
                  RD_ROTATION, RD_THRESHOLD, RD_WINDOW)
from .fixedpoint import M32, s32, sat32
from .rfsg import unwrap

ERR_RO_WRITE = 0x01
ERR_ARM_IN_PAST = 0x02
ERR_REARM = 0x04
ERR_MUX_DISABLED = 0x08
ERR_WINDOW = 0x10

ACC_BITS = 48


def wrap48(x):
    h = 1 << (ACC_BITS - 1)
    return ((x + h) & ((1 << ACC_BITS) - 1)) - h


class Result:
    __slots__ = ("state", "I", "Q", "P", "ready")

    def __init__(self, state, I, Q, P, ready):
        self.state = state
        self.I = I
        self.Q = Q
        self.P = P
        self.ready = ready


class Decoder:
    def __init__(self, index=0, samples_per_cycle=4, trig=None, readout_buffer=True,
                 buffer_capacity=16384, events=None):
        self.index = index
        self.S = samples_per_cycle
        self.trig = trig or trigmod.lut(12)
        self._targs = self.trig.args()
        self.has_buffer = bool(readout_buffer)
        self.buffer_capacity = buffer_capacity if readout_buffer else 0
        size = 256
        while size < 2 * max(self.buffer_capacity, 1):
            size <<= 1
        self.rdbuf = Memory(size, readonly=True)
        self.events = events if events is not None else []
        self.source = None        # callable(channel, h0, n) -> int32 samples
        self.on_multiplex = None  # callable(bank_bit, now) -> bool
        self.reset()

    def reset(self):
        self.now = 0
        self.regs = {"freq": 0, "phase": 0, "window": 256, "threshold": 0,
                     "rotation": 0, "capture": 0, "multiplex": 0}
        self.err = 0
        self.armed = False
        self.result = None
        self.last_result = None
        self.acc_i = 0
        self.acc_q = 0
        self.captured = 0
        self.rdbuf.data[:] = bytes(self.rdbuf.size)

    # -- control -------------------------------------------------------------

    def configure(self, freq=None, phase=None, window=None, threshold=None, rotation=None,
                  capture=None):
        for k, v in (("freq", freq), ("phase", phase), ("window", window),
                     ("threshold", threshold), ("rotation", rotation), ("capture", capture)):
            if v is not None:
                self.regs[k] = v

    def arm(self, t_start_word, now):
        """Arm a window starting at ADC sample ``S * t_start``."""
        r = self.regs
        T = r["window"]
        capture = bool(r["capture"] & 1)
        if T <= 0 or T > 0x1_0000 or (capture and T > self.buffer_capacity):
            self.err |= ERR_WINDOW
            self.events.append(("rd_error", now, self.index, "bad-window"))
            return False
        if self.armed:
            self.err |= ERR_REARM
            self.events.append(("rd_error", now, self.index, "re-armed"))
        t_start = unwrap(now, t_start_word)
        if t_start < now:
            self.err |= ERR_ARM_IN_PAST
            self.events.append(("rd_error", now, self.index, "arm-in-past"))
            t_start = now
        self.now = max(self.now, now)
        self.armed = True
        self.result = None
        self.h_start = self.S * t_start
        self.h_end = self.h_start + T
        self.h_next = self.h_start
        self.f = r["freq"] & M32
        self.phi = r["phase"] & M32
        self.threshold = s32(r["threshold"])
        self.rot_c, self.rot_s = self.trig.cos_sin(r["rotation"])
        self.capture = capture
        self.acc_i = 0
        self.acc_q = 0
        if capture:
            self.captured = 0
            self.rdbuf.data[:] = bytes(self.rdbuf.size)
        self.events.append(("arm", now, self.index, t_start, T))
        return True

    # -- datapath ----------------------------------------------------------------

    def advance(self, t_end):
        """Consume window samples belonging to cycles before ``t_end``.

        Without capture only the finished sum is observable, so samples are
        pulled in one span once the window has fully arrived.
        """
        if t_end <= self.now:
            return
        self.now = t_end
        if not self.armed:
            return
        hi = min(self.h_end, self.S * t_end)
        if hi < self.h_end and not self.capture:
            return
        a = self.h_next
        if hi <= a:
            return
        n = hi - a
        x = self.source(self.index, a, n)
        di, dq = kernels.demod(x, a, n, self.f, self.phi, *self._targs)
        self.acc_i = wrap48(self.acc_i + di)
        self.acc_q = wrap48(self.acc_q + dq)
        if self.capture:
            off = a - self.h_start
            self.rdbuf.data[2 * off:2 * (off + n)] = np.asarray(x, dtype="<i2").tobytes()
            self.captured = off + n
        self.h_next = hi
        if hi == self.h_end:
            self._finalize()

    def consume(self, samples, h0):
        """Feed explicit samples starting at global ADC index ``h0`` (block harness)."""
        x = np.ascontiguousarray(samples, dtype=np.int32)
        a = max(h0, self.h_next)
        b = min(h0 + len(x), self.h_end)
        if not self.armed or b <= a:
            return
        seg = np.ascontiguousarray(x[a - h0:b - h0])
        di, dq = kernels.demod(seg, a, b - a, self.f, self.phi, *self._targs)
        self.acc_i = wrap48(self.acc_i + di)
        self.acc_q = wrap48(self.acc_q + dq)
        if self.capture:
            off = a - self.h_start
            self.rdbuf.data[2 * off:2 * (off + b - a)] = seg.astype("<i2").tobytes()
            self.captured = off + b - a
        self.h_next = b
        if b == self.h_end:
            self._finalize()

    def _finalize(self):
        last_cycle = (self.h_end - 1) // self.S
        P = (self.acc_i * self.rot_c + self.acc_q * self.rot_s) >> 15
        state = 1 if P < self.threshold else 0
        self.result = Result(state, self.acc_i, self.acc_q, P, last_cycle + 2)
        self.last_result = self.result
        self.armed = False
        self.events.append(("result", last_cycle + 1, self.index, state, self.acc_i, self.acc_q))

    def read_result(self, now):
        r = self.result
        if r is None or now < r.ready:
            return 0
        return 0x8000_0000 | r.state

    # -- MMIO -----------------------------------------------------------------

    def mmio_read(self, off, now=0):
        regs = self.regs
        if off == RD_RESULT:
            return self.read_result(now)
        if off == RD_I or off == RD_Q:
            r = self.result
            if r is None or now < r.ready:
                return 0
            return sat32(r.I if off == RD_I else r.Q) & M32
        if off == RD_DEC_FREQ:
            return regs["freq"]
        if off == RD_DEC_PHASE:
            return regs["phase"]
        if off == RD_WINDOW:
            return regs["window"]
        if off == RD_THRESHOLD:
            return regs["threshold"] & M32
        if off == RD_ROTATION:
            return regs["rotation"]
        if off == RD_MULTIPLEX:
            return regs["multiplex"]
        if off == RD_CAPTURE_CTRL:
            return regs["capture"]
        if off == RD_CAPTURE_COUNT:
            return self.captured
        if off == RD_ERRFLAGS:
            return self.err
        return 0

    def mmio_write(self, off, value, now=0):
        regs = self.regs
        if off == RD_DEC_FREQ:
            regs["freq"] = value
        elif off == RD_DEC_PHASE:
            regs["phase"] = value
        elif off == RD_WINDOW:
            regs["window"] = value
        elif off == RD_THRESHOLD:
            regs["threshold"] = s32(value)
        elif off == RD_ROTATION:
            regs["rotation"] = value
        elif off == RD_CAPTURE_CTRL:
            regs["capture"] = value & 1
        elif off == RD_MULTIPLEX:
            regs["multiplex"] = value
            ok = self.on_multiplex(value & 1, now) if self.on_multiplex else False
            if not ok:
                self.err |= ERR_MUX_DISABLED
        elif off == RD_ARM:
            self.arm(value, now)
        elif off == RD_ERRFLAGS:
            self.err &= ~value
        else:
            self.err |= ERR_RO_WRITE
