"""Compare the compiled and pure-Python datapath kernels.

    python3 benchmarks/bench_kernels.py [--samples N] [--repeat R]

Each row times one kernel call over N samples (best of R) and checks that
the two backends return identical results before reporting the speedup.
"""

import argparse
import time

import numpy as np

from qcsoc import kernels, trig


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(n, t):
    rng = np.random.default_rng(0)
    thetas = rng.integers(0, 2**32, n, dtype=np.uint64).astype(np.uint32)
    env = np.full(4096, 32767, dtype=np.int32)
    x = rng.integers(-32768, 32768, n).astype(np.int32)
    noise = rng.normal(0, 1000, n)
    f, phi = 0x0123_4567, 0x89AB_CDEF

    def cos_sin_many(k):
        c = np.empty(n, dtype=np.int32)
        s = np.empty(n, dtype=np.int32)
        k.cos_sin_many(thetas, t.kind, t.table, t.param, t.x0, c, s)
        return c.tobytes() + s.tobytes()

    def mix(k):
        out = np.empty(n, dtype=np.int32)
        r = k.mix(out, 0, n, f, phi, env, 0, 20000, *t.args())
        return out.tobytes(), r

    def demod(k):
        return k.demod(x, 0, n, f, phi, *t.args())

    def reflect(k):
        out = np.empty(n, dtype=np.int32)
        k.reflect(out, 0, n, f, phi, 16384.0, noise, 0, n)
        return out.tobytes()

    return {"cos_sin_many": cos_sin_many, "mix": mix, "demod": demod, "reflect": reflect}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1 << 14)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        ck = kernels.load("c")
    except ImportError:
        print("compiled kernels not built; reinstall with Cython available")
        return 1
    pk = kernels.load("python")
    print(f"{'kernel':<14} {'trig':<10} {'python ms':>10} {'c ms':>9} {'speedup':>8}")
    for t in (trig.lut(12), trig.cordic(16)):
        for name, fn in cases(args.samples, t).items():
            if name == "reflect" and t.kind != kernels.LUT:
                continue    # no trig backend involved
            tp, rp = _best(lambda: fn(pk), args.repeat)
            tc, rc = _best(lambda: fn(ck), args.repeat)
            if rp != rc:
                raise SystemExit(f"{name}/{t.name}: backends disagree")
            print(f"{name:<14} {t.name:<10} {tp * 1e3:>10.2f} {tc * 1e3:>9.3f} {tp / tc:>7.0f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
