"""Fixed-point cosine/sine backends for the carrier generators.

Both map a 32-bit phase word (full turn = 2**32) to Q1.15 ``(cos, sin)``.
The LUT stores a quarter wave and interpolates linearly between entries;
CORDIC rotates in phase-word units with 16 guard bits.
"""

import math

import numpy as np

from . import kernels

LUT_LATENCY = 2


class Trig:
    """A configured trig backend; ``latency`` is its pipeline depth in cycles."""

    def __init__(self, kind: int, param: int, table, x0: int, latency: int, name: str):
        self.kind = kind
        self.param = param
        self.table = np.ascontiguousarray(table, dtype=np.int64)
        self.x0 = x0
        self.latency = latency
        self.name = name

    def cos_sin(self, theta: int):
        return kernels.cos_sin(theta & 0xFFFF_FFFF, self.kind, self.table, self.param, self.x0)

    def cos_sin_many(self, thetas):
        thetas = np.ascontiguousarray(thetas, dtype=np.uint32)
        c = np.empty(len(thetas), dtype=np.int32)
        s = np.empty(len(thetas), dtype=np.int32)
        kernels.cos_sin_many(thetas, self.kind, self.table, self.param, self.x0, c, s)
        return c, s

    def args(self):
        """Trailing arguments shared by the mix/demod kernels."""
        return self.kind, self.table, self.param, self.x0

    def __repr__(self):
        return f"Trig({self.name})"


def lut(table_bits: int = 12) -> Trig:
    if not 2 <= table_bits <= 24:
        raise ValueError("table_bits must be in [2, 24]")
    n = 1 << table_bits
    table = [int(round(32767 * math.sin(math.pi / 2 * i / n))) for i in range(n + 1)]
    return Trig(kernels.LUT, table_bits, table, 0, LUT_LATENCY, f"lut:{table_bits}")


def cordic_gain(iterations: int) -> float:
    k = 1.0
    for i in range(iterations):
        k /= math.sqrt(1.0 + 2.0 ** (-2 * i))
    return k


def cordic(iterations: int = 16) -> Trig:
    if not 1 <= iterations <= 30:
        raise ValueError("iterations must be in [1, 30]")
    atans = [int(round(math.atan(2.0 ** -i) * 2**32 / (2 * math.pi))) for i in range(iterations)]
    x0 = int(round(32767 * cordic_gain(iterations) * (1 << kernels._pykernels.CORDIC_GUARD)))
    return Trig(kernels.CORDIC, iterations, atans, x0, iterations, f"cordic:{iterations}")


def parse(text: str) -> Trig:
    """Build a backend from ``"lut"``, ``"lut:12"``, ``"cordic"`` or ``"cordic:16"``."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "lut":
        return lut(int(arg) if arg else 12)
    if name == "cordic":
        return cordic(int(arg) if arg else 16)
    raise ValueError(f"unknown trig backend {text!r}")


def reference(theta: int):
    """Double-precision oracle, rounded to Q1.15."""
    a = 2 * math.pi * (theta & 0xFFFF_FFFF) / 2**32
    return round(32767 * math.cos(a)), round(32767 * math.sin(a))
