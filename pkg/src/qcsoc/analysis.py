"""Host-side analysis: readout error oracle, readout block harness, Rabi fit.

The misclassification oracle treats the integrated in-phase sum as normal
with a mean and variance computed exactly per sample: each term
``floor(sat16(round(mu + n)) * c / 32768)`` is a discrete random variable
whose moments are summed over the integer lattice of ``round(mu + n)``.
Only the final step (the sum of independent terms is normal) is an
approximation.
"""

import math

import numpy as np
from scipy import optimize, special

from . import trig as trigmod
from .fixedpoint import M32
from .plant import PlantParams, QubitPlant
from .rfdec import Decoder


def reference_samples(h0, n, freq, phase, amplitude):
    """Noise-free reflected samples ``amplitude * cos(freq * h + phase)`` as floats."""
    h = np.arange(h0, h0 + n, dtype=np.float64)
    ang = ((freq * h.astype(np.int64) + phase) & M32).astype(np.float64) * (2 * math.pi / 2 ** 32)
    return amplitude * np.cos(ang)


def _term_moments(mu, c, sigma, span=9):
    """Mean and variance of floor(sat16(round(mu + n)) * c / 32768), n ~ N(0, sigma)."""
    if sigma == 0:
        x = max(-32768, min(32767, int(np.rint(mu))))
        return float((x * c) >> 15), 0.0
    lo = int(math.floor(mu - span * sigma)) - 1
    hi = int(math.ceil(mu + span * sigma)) + 1
    x = np.arange(lo, hi + 1, dtype=np.int64)
    # P(round(mu + n) = x): rint rounds half to even, ties have probability zero
    z_hi = (x + 0.5 - mu) / sigma
    z_lo = (x - 0.5 - mu) / sigma
    prob = 0.5 * (special.erfc(-z_hi / math.sqrt(2)) - special.erfc(-z_lo / math.sqrt(2)))
    prob = np.abs(prob)
    xs = np.clip(x, -32768, 32767)
    v = np.floor_divide(xs * c, 32768).astype(np.float64)
    tot = prob.sum()
    m = float((prob * v).sum() / tot)
    var = float((prob * (v - m) ** 2).sum() / tot)
    return m, var


def readout_moments(state, plant: PlantParams, window, dec_freq, dec_phase, trig=None,
                    h_start=0):
    """Exact mean and variance of the in-phase sum for one readout window."""
    trig = trig or trigmod.lut(12)
    phase = plant.phi1 if state else plant.phi0
    mu = reference_samples(h_start - plant.delay, window, plant.readout_freq, phase,
                           float(plant.reflect_amplitude))
    th = (dec_freq * np.arange(h_start, h_start + window, dtype=np.int64) + dec_phase) & M32
    c, _ = trig.cos_sin_many(th.astype(np.uint32))
    mean = 0.0
    var = 0.0
    for m_h, c_h in zip(mu, c):
        a, b = _term_moments(float(m_h), int(c_h), plant.sigma)
        mean += a
        var += b
    return mean, var


def misclassification_rate(plant: PlantParams, window, dec_freq, dec_phase, trig=None,
                           threshold=0, h_start=0):
    """Normal-tail prediction of the error rate averaged over both states.

    The decision is ``state = 1 if ((I * C) >> 15) < threshold`` with the
    rotation at zero, where C = cos(0) from the same backend; for a zero
    threshold that is ``I < 0``.
    """
    if threshold != 0:
        raise NotImplementedError("the oracle covers the zero threshold only")
    rates = []
    for state in (0, 1):
        m, v = readout_moments(state, plant, window, dec_freq, dec_phase, trig, h_start)
        sd = math.sqrt(v)
        if sd == 0:
            p_neg = 1.0 if m < 0 else 0.0
        else:
            # P(I < 0) = P(I <= -1) for an integer sum; continuity-corrected at -0.5
            p_neg = 0.5 * special.erfc((m + 0.5) / (sd * math.sqrt(2)))
        rates.append(p_neg if state == 0 else 1.0 - p_neg)
    return 0.5 * (rates[0] + rates[1]), rates


def binomial_interval(p, n, z=3.0):
    half = z * math.sqrt(max(p * (1 - p), 0.0) / n)
    return p - half, p + half


class ReadoutBlock:
    """Readout chain without the CPU: plant window -> decoder.consume.

    Each shot prepares the plant pole directly, opens one readout window of
    ``window`` ADC samples and feeds the decoder the exact samples the plant
    produces, with per-shot noise streams.
    """

    def __init__(self, plant: PlantParams, window=64, dac_per_cycle=16, adc_per_cycle=4,
                 trig=None, seed=0):
        self.p = plant
        self.window = window
        self.S = dac_per_cycle
        self.Sa = adc_per_cycle
        self.seed = seed
        self.plant = QubitPlant(plant, dac_per_cycle, adc_per_cycle)
        self.dec = Decoder(plant.readout_adc, adc_per_cycle, trig or trigmod.lut(12),
                           readout_buffer=False)
        self.dec_freq = plant.readout_freq & M32
        self.dec_phase = (-plant.readout_freq * plant.delay) & M32
        self.dec.configure(freq=self.dec_freq, phase=self.dec_phase, window=window)
        self.t0 = 4   # readout pulse start cycle

    @property
    def h_start(self):
        return self.Sa * self.t0 + self.p.delay

    def shot(self, shot, state):
        pl = self.plant
        pl.reset(shot)
        pl.seed(self.seed, shot)
        pl.theta = math.pi if state else 0.0
        dur = self.window * self.S // self.Sa
        pl.on_readout_window(self.S * self.t0, dur)
        w = pl.windows[-1]
        pl.advance(w.collapse_cycle + 1)
        x = pl.samples(self.p.readout_adc, w.h_start, self.window)
        dec = self.dec
        dec.reset()
        dec.configure(freq=self.dec_freq, phase=self.dec_phase, window=self.window)
        dec.arm(w.h_start // self.Sa, 0)
        dec.h_start = w.h_start
        dec.h_end = w.h_start + self.window
        dec.h_next = w.h_start
        dec.consume(x, w.h_start)
        r = dec.last_result
        return r.state, r.I, r.Q

    def run(self, states, first_shot=0):
        out = np.empty((len(states), 3), dtype=np.int64)
        for i, s in enumerate(states):
            out[i] = self.shot(first_shot + i, s)
        return out


def rabi_model(a, a_pi):
    return np.sin(np.pi * np.asarray(a, dtype=np.float64) / (2.0 * a_pi)) ** 2


def fit_rabi(amps, p1, guess=None):
    """Least-squares fit of ``P(1) = sin^2(pi a / (2 a_pi))``; returns (a_pi, stderr)."""
    amps = np.asarray(amps, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    if guess is None:
        guess = float(amps[int(np.argmax(p1))]) or float(amps.max()) / 2
    popt, pcov = optimize.curve_fit(rabi_model, amps, p1, p0=[guess])
    return float(popt[0]), float(math.sqrt(pcov[0, 0])) if np.isfinite(pcov[0, 0]) else float("nan")


def iq_phase(I, Q):
    """Angle of the (I, Q) point in radians, in (-pi, pi]."""
    return math.atan2(Q, I)
