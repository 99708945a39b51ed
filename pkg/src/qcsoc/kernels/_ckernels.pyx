# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled datapath kernels. Must stay bit-exact with ``_pykernels.py``."""

from libc.math cimport cos, rint

DEF M32 = 0xFFFFFFFF
DEF QUARTER = 0x40000000
DEF GUARD = 16

LUT = 0
CORDIC = 1
CORDIC_GUARD = GUARD

cdef double TWO_PI_OVER_TURN = 6.283185307179586 / 4294967296.0


cdef inline long long _qmul(long long a, long long b) nogil:
    cdef long long p = a * b
    cdef long long q = p >> 15
    cdef long long rem = p & 0x7FFF
    if rem > 0x4000 or (rem == 0x4000 and (q & 1)):
        q += 1
    if q > 32767:
        return 32767
    if q < -32768:
        return -32768
    return q


cdef inline long long _qsin(long long r, const long long[::1] table, int bits) nogil:
    cdef int fbits = 30 - bits
    cdef long long idx = r >> fbits
    cdef long long frac = r & ((1LL << fbits) - 1)
    cdef long long base = table[idx]
    if frac == 0:
        return base
    cdef long long delta = table[idx + 1] - base
    return base + ((delta * frac + (1LL << (fbits - 1))) >> fbits)


cdef inline void _cs(unsigned long long theta, int kind, const long long[::1] table,
                     int param, long long x0, long long* c, long long* s) nogil:
    cdef int q = <int>(theta >> 30)
    cdef long long r = <long long>(theta & (QUARTER - 1))
    cdef long long cr, sr, x, y, nx, z
    cdef int i
    if kind == 0:
        sr = _qsin(r, table, param)
        cr = _qsin(QUARTER - r, table, param)
    elif r == 0:
        cr = 32767
        sr = 0
    else:
        x = x0
        y = 0
        z = r
        for i in range(param):
            if z >= 0:
                nx = x - (y >> i)
                y = y + (x >> i)
                z -= table[i]
            else:
                nx = x + (y >> i)
                y = y - (x >> i)
                z += table[i]
            x = nx
        cr = (x + (1LL << (GUARD - 1))) >> GUARD
        sr = (y + (1LL << (GUARD - 1))) >> GUARD
        if cr > 32767:
            cr = 32767
        elif cr < -32767:
            cr = -32767
        if sr > 32767:
            sr = 32767
        elif sr < -32767:
            sr = -32767
    if q == 0:
        c[0] = cr
        s[0] = sr
    elif q == 1:
        c[0] = -sr
        s[0] = cr
    elif q == 2:
        c[0] = -cr
        s[0] = -sr
    else:
        c[0] = sr
        s[0] = -cr


def cos_sin(theta, int kind, const long long[::1] table, int param, long long x0):
    cdef long long c, s
    _cs((<unsigned long long>(theta & M32)), kind, table, param, x0, &c, &s)
    return c, s


def cos_sin_many(const unsigned int[::1] thetas, int kind, const long long[::1] table,
                 int param, long long x0, int[::1] c_out, int[::1] s_out):
    cdef Py_ssize_t k
    cdef long long c, s
    for k in range(thetas.shape[0]):
        _cs(thetas[k], kind, table, param, x0, &c, &s)
        c_out[k] = <int>c
        s_out[k] = <int>s


def mix(int[::1] out, long long g0, Py_ssize_t n, unsigned long long f,
        unsigned long long phi, const int[::1] env, long long env_idx0,
        long long amp, int kind, const long long[::1] table, int param, long long x0):
    """Fill ``out[:n]`` with E*A*cos(f*g+phi); returns (sum, clamped)."""
    cdef Py_ssize_t k
    cdef long long cap = env.shape[0]
    cdef long long total = 0, ei, v, c, s
    cdef bint clamped = False
    cdef unsigned long long theta
    for k in range(n):
        theta = (f * <unsigned long long>(g0 + k) + phi) & M32
        _cs(theta, kind, table, param, x0, &c, &s)
        ei = env_idx0 + k
        if ei >= cap:
            ei = cap - 1
            clamped = True
        v = _qmul(_qmul(env[ei], amp), c)
        out[k] = <int>v
        total += v
    return total, clamped


def demod(const int[::1] x, long long g0, Py_ssize_t n, unsigned long long f,
          unsigned long long phi, int kind, const long long[::1] table, int param,
          long long x0):
    """Accumulate I += x*cos >> 15 and Q += -x*sin >> 15 over ``x[:n]``."""
    cdef Py_ssize_t k
    cdef long long di = 0, dq = 0, c, s, xv
    cdef unsigned long long theta
    for k in range(n):
        theta = (f * <unsigned long long>(g0 + k) + phi) & M32
        _cs(theta, kind, table, param, x0, &c, &s)
        xv = x[k]
        di += (xv * c) >> 15
        dq += (-xv * s) >> 15
    return di, dq


def reflect(int[::1] out, long long h0, Py_ssize_t n, unsigned long long fr,
            unsigned long long phase, double r, noise, Py_ssize_t lo, Py_ssize_t hi):
    """Reflected readout samples; signal present only for k in [lo, hi)."""
    cdef Py_ssize_t k
    cdef double v
    cdef unsigned long long theta
    cdef const double[::1] nz
    cdef bint has_noise = noise is not None
    if has_noise:
        nz = noise
    for k in range(n):
        v = 0.0
        if lo <= k < hi:
            theta = (fr * <unsigned long long>(h0 + k) + phase) & M32
            v = r * cos(TWO_PI_OVER_TURN * <double>theta)
        if has_noise:
            v += nz[k]
        v = rint(v)
        if v > 32767.0:
            v = 32767.0
        elif v < -32768.0:
            v = -32768.0
        out[k] = <int>v
