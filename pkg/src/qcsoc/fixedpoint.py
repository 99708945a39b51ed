"""Q1.15 and 32-bit phase-word helpers shared by the datapath models."""

import math

M32 = 0xFFFF_FFFF
Q15_MAX = 32767
Q15_MIN = -32768
FULL_TURN = 1 << 32


def sat16(x: int) -> int:
    if x > Q15_MAX:
        return Q15_MAX
    if x < Q15_MIN:
        return Q15_MIN
    return x


def round_shift(x: int, n: int) -> int:
    """Arithmetic right shift by ``n`` with round-half-to-even."""
    q = x >> n
    rem = x & ((1 << n) - 1)
    half = 1 << (n - 1)
    if rem > half or (rem == half and q & 1):
        q += 1
    return q


def qmul(a: int, b: int) -> int:
    """Q1.15 multiply, rounded to nearest-even and saturated."""
    return sat16(round_shift(a * b, 15))


def s32(x: int) -> int:
    x &= M32
    return x - (1 << 32) if x & 0x8000_0000 else x


def s16(x: int) -> int:
    x &= 0xFFFF
    return x - 0x10000 if x & 0x8000 else x


def sat32(x: int) -> int:
    return max(-(1 << 31), min((1 << 31) - 1, x))


def phase_word(turns: float) -> int:
    """Fraction of a full turn -> 32-bit phase word."""
    return int(round(turns * FULL_TURN)) & M32


def phase_pi(x: float) -> int:
    """Angle ``x * pi`` radians -> phase word (the C-side ``PHASE_PI`` macro)."""
    return phase_word(x / 2.0)


def freq_word(hz: float, sample_rate_hz: float) -> int:
    return phase_word(hz / sample_rate_hz)


def word_to_radians(word: int) -> float:
    return 2.0 * math.pi * (word & M32) / FULL_TURN


def wrap_distance(a: int, b: int) -> int:
    """Shortest modular distance between two 32-bit words."""
    d = (a - b) & M32
    return min(d, FULL_TURN - d)


def time_due(now: int, when: int) -> bool:
    """``when <= now`` under 32-bit wrap within a +/-2^31 window."""
    return ((now - when) & M32) < 0x8000_0000
