"""Surrogate qubit plant: Rabi-style drive absorption and phase-encoded readout.

Drive: while the drive channel's active frequency is within tolerance of
the qubit frequency, ``theta += coupling * sum(sample) / 32767``.
Readout: each readout-channel pulse window reflects
``x(h) = r cos(f_r (h - d) + phi_state) + n(h)`` on the readout ADC, delayed
by ``d`` ADC samples. The qubit collapses at the first reflected sample of a
window with P(1) = sin^2(theta/2).

Randomness comes from named streams keyed by (seed, shot, stream, ...):
noise is drawn per 1024-sample block so any span can be produced in any
order; collapse draws are sequential within a shot.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fixedpoint import wrap_distance

NOISE_BLOCK = 1024
STREAM_NOISE = 1
STREAM_COLLAPSE = 2


@dataclass
class PlantParams:
    drive_channel: int = 7
    readout_dac: int = 15
    readout_adc: int = 7
    coupling: float = math.pi / 32
    amplitude_error: float = 0.0
    qubit_freq: int = 0
    freq_tolerance: int = 0x0010_0000
    delay: int = 8
    reflect_amplitude: int = 16384
    phi0: int = 0
    phi1: int = 0x8000_0000
    sigma: float = 0.0
    readout_freq: int = 0x1000_0000
    initial_theta: float = 0.0

    @property
    def effective_coupling(self):
        return self.coupling * (1.0 + self.amplitude_error)

    def pi_area(self):
        """Integrated drive (sum of samples / 32767) that makes a pi rotation."""
        return math.pi / self.effective_coupling


class ReadoutWindow:
    __slots__ = ("h_start", "h_end", "state", "collapse_cycle")

    def __init__(self, h_start, h_end, collapse_cycle):
        self.h_start = h_start
        self.h_end = h_end
        self.state = None
        self.collapse_cycle = collapse_cycle


class QubitPlant:
    def __init__(self, params=None, dac_samples_per_cycle=16, adc_samples_per_cycle=4,
                 events=None):
        self.p = params or PlantParams()
        self.S = dac_samples_per_cycle
        self.Sa = adc_samples_per_cycle
        self.events = events if events is not None else []
        self._seed = 0
        self._shot = 0
        self.reset()

    # -- lifecycle ---------------------------------------------------------------

    def reset(self, shot=None):
        """Fresh qubit and streams for a new shot; seeding is allowed again."""
        if shot is not None:
            self._shot = shot
        self.theta = self.p.initial_theta
        self.state = 0
        self.windows = []
        self._pending = []
        self._collapse_rng = None
        self._noise_cache = {}
        self._started = False
        self.collapses = 0

    def seed(self, seed, shot=None):
        if self._started:
            raise RuntimeError("plant cannot be re-seeded after the run has started")
        self._seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        if shot is not None:
            self._shot = shot
        self._collapse_rng = None
        self._noise_cache = {}

    def _stream(self, *key):
        ss = np.random.SeedSequence(entropy=self._seed, spawn_key=(self._shot,) + key)
        return np.random.Generator(np.random.PCG64(ss))

    # -- drive side --------------------------------------------------------------

    def p1(self):
        return math.sin(self.theta / 2.0) ** 2

    def absorb(self, t_lo, t_hi, freq, sample_sum):
        self._started = True
        if wrap_distance(freq, self.p.qubit_freq) <= self.p.freq_tolerance:
            self.theta += self.p.effective_coupling * sample_sum / 32767.0

    # -- readout side ------------------------------------------------------------

    def on_readout_window(self, g0, dur):
        """Readout DAC started a pulse window ``[g0, g0 + dur)`` in DAC samples."""
        self._started = True
        if self.windows:
            prev = self.windows[-1]
            h_new = -(-g0 * self.Sa // self.S) + self.p.delay
            if prev.h_end > h_new:
                prev.h_end = max(prev.h_start, h_new)
        if dur <= 0:
            return
        h_start = -(-g0 * self.Sa // self.S) + self.p.delay
        h_end = -(-(g0 + dur) * self.Sa // self.S) + self.p.delay
        if h_end <= h_start:
            return
        w = ReadoutWindow(h_start, h_end, h_start // self.Sa)
        self.windows.append(w)
        self._pending.append(w)

    def next_event(self, now):
        """Cycle boundary right after the next pending collapse."""
        best = None
        for w in self._pending:
            if w.collapse_cycle >= now and (best is None or w.collapse_cycle + 1 < best):
                best = w.collapse_cycle + 1
        return best

    def advance(self, t_end):
        """Perform collapses whose cycle is before ``t_end``."""
        if not self._pending:
            return
        keep = []
        for w in self._pending:
            if w.collapse_cycle < t_end:
                self._collapse(w)
            else:
                keep.append(w)
        self._pending = keep

    def _collapse(self, w):
        if self._collapse_rng is None:
            self._collapse_rng = self._stream(STREAM_COLLAPSE)
        p1 = min(1.0, max(0.0, self.p1()))
        u = self._collapse_rng.random()
        self.state = 1 if u < p1 else 0
        self.theta = math.pi if self.state else 0.0
        w.state = self.state
        self.collapses += 1
        self.events.append(("collapse", w.collapse_cycle, self.state, p1))

    def _noise(self, h0, n):
        sigma = self.p.sigma
        out = np.empty(n, dtype=np.float64)
        h = h0
        k = 0
        while k < n:
            b = h // NOISE_BLOCK
            blk = self._noise_cache.get(b)
            if blk is None:
                if len(self._noise_cache) > 64:
                    self._noise_cache.clear()
                blk = self._stream(STREAM_NOISE, self.p.readout_adc, b & 0xFFFF_FFFF).normal(
                    0.0, sigma, NOISE_BLOCK)
                self._noise_cache[b] = blk
            off = h - b * NOISE_BLOCK
            m = min(NOISE_BLOCK - off, n - k)
            out[k:k + m] = blk[off:off + m]
            k += m
            h += m
        return out

    def samples(self, channel, h0, n):
        """ADC samples ``[h0, h0 + n)`` for ``channel`` (int32)."""
        self._started = True
        out = np.zeros(n, dtype=np.int32)
        if channel != self.p.readout_adc or n <= 0:
            return out
        noise = self._noise(h0, n) if self.p.sigma > 0 else None
        # split the span at window edges
        cuts = {h0, h0 + n}
        active = []
        for w in self.windows:
            if w.h_end > h0 and w.h_start < h0 + n:
                active.append(w)
                cuts.add(max(h0, w.h_start))
                cuts.add(min(h0 + n, w.h_end))
        cuts = sorted(cuts)
        p = self.p
        for a, b in zip(cuts, cuts[1:]):
            w = None
            for cand in active:
                if cand.h_start <= a < cand.h_end:
                    w = cand
            seg = out[a - h0:b - h0]
            nz = noise[a - h0:b - h0] if noise is not None else None
            if w is None:
                kernels.reflect(seg, a - p.delay, b - a, p.readout_freq, 0,
                                float(p.reflect_amplitude), nz, 0, 0)
                continue
            if w.state is None:
                raise RuntimeError("readout samples requested before the collapse was resolved")
            phase = p.phi1 if w.state else p.phi0
            kernels.reflect(seg, a - p.delay, b - a, p.readout_freq, phase,
                            float(p.reflect_amplitude), nz, 0, b - a)
        return out
