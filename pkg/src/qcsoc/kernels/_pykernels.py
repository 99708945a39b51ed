"""Pure-Python datapath kernels.

Bit-exact twin of ``_ckernels.pyx``; used when the extension is not built
or when ``QCSOC_KERNELS=python`` is set.
"""

import math

LUT = 0
CORDIC = 1
CORDIC_GUARD = 16

_M32 = 0xFFFF_FFFF
_QUARTER = 1 << 30
_TWO_PI_OVER_TURN = 2.0 * math.pi / 4294967296.0


def _qmul(a, b):
    p = a * b
    q = p >> 15
    rem = p & 0x7FFF
    if rem > 0x4000 or (rem == 0x4000 and q & 1):
        q += 1
    if q > 32767:
        return 32767
    if q < -32768:
        return -32768
    return q


def _qsin(r, table, bits):
    # r in [0, 2^30]; table holds N+1 quarter-wave points
    fbits = 30 - bits
    idx = r >> fbits
    frac = r & ((1 << fbits) - 1)
    base = table[idx]
    if frac == 0:
        return base
    delta = table[idx + 1] - base
    return base + ((delta * frac + (1 << (fbits - 1))) >> fbits)


def _lut(theta, table, bits):
    q = theta >> 30
    r = theta & (_QUARTER - 1)
    sr = _qsin(r, table, bits)
    cr = _qsin(_QUARTER - r, table, bits)
    if q == 0:
        return cr, sr
    if q == 1:
        return -sr, cr
    if q == 2:
        return -cr, -sr
    return sr, -cr


def _cordic(theta, atans, iters, x0):
    q = theta >> 30
    z = theta & (_QUARTER - 1)
    if z == 0:
        # axis points bypass the rotation so they come out exact
        return ((32767, 0), (0, 32767), (-32767, 0), (0, -32767))[q]
    x = x0
    y = 0
    for i in range(iters):
        if z >= 0:
            x, y = x - (y >> i), y + (x >> i)
            z -= atans[i]
        else:
            x, y = x + (y >> i), y - (x >> i)
            z += atans[i]
    half = 1 << (CORDIC_GUARD - 1)
    cr = (x + half) >> CORDIC_GUARD
    sr = (y + half) >> CORDIC_GUARD
    cr = 32767 if cr > 32767 else (-32767 if cr < -32767 else cr)
    sr = 32767 if sr > 32767 else (-32767 if sr < -32767 else sr)
    if q == 0:
        return cr, sr
    if q == 1:
        return -sr, cr
    if q == 2:
        return -cr, -sr
    return sr, -cr


def cos_sin(theta, kind, table, param, x0):
    theta &= _M32
    if kind == LUT:
        return _lut(theta, table, param)
    return _cordic(theta, table, param, x0)


def cos_sin_many(thetas, kind, table, param, x0, c_out, s_out):
    tbl = [int(v) for v in table]
    for k in range(len(thetas)):
        c, s = cos_sin(int(thetas[k]), kind, tbl, param, x0)
        c_out[k] = c
        s_out[k] = s


def mix(out, g0, n, f, phi, env, env_idx0, amp, kind, table, param, x0):
    """Fill ``out[:n]`` with E*A*cos(f*g+phi); returns (sum, clamped)."""
    cap = len(env)
    total = 0
    clamped = False
    for k in range(n):
        theta = (f * (g0 + k) + phi) & _M32
        c, _ = cos_sin(theta, kind, table, param, x0)
        ei = env_idx0 + k
        if ei >= cap:
            ei = cap - 1
            clamped = True
        v = _qmul(_qmul(int(env[ei]), amp), c)
        out[k] = v
        total += v
    return total, clamped


def demod(x, g0, n, f, phi, kind, table, param, x0):
    """Accumulate I += x*cos >> 15 and Q += -x*sin >> 15 over ``x[:n]``."""
    di = 0
    dq = 0
    for k in range(n):
        theta = (f * (g0 + k) + phi) & _M32
        c, s = cos_sin(theta, kind, table, param, x0)
        xv = int(x[k])
        di += (xv * c) >> 15
        dq += (-xv * s) >> 15
    return di, dq


def reflect(out, h0, n, fr, phase, r, noise, lo, hi):
    """Reflected readout samples; signal present only for k in [lo, hi)."""
    for k in range(n):
        v = 0.0
        if lo <= k < hi:
            theta = (fr * (h0 + k) + phase) & _M32
            v = r * math.cos(_TWO_PI_OVER_TURN * theta)
        if noise is not None:
            v += noise[k]
        iv = round(v)
        out[k] = 32767 if iv > 32767 else (-32768 if iv < -32768 else iv)
