"""Scalar reference signal generator: one sample at a time from the closed form.

A schedule is a list of pulses ``(t0, freq, phase, amp, env_start, dur)``.
Each pulse's parameters take effect at sample S*t0 and stay active until the
next pulse; output is nonzero only inside ``[S*t0, S*t0 + dur)``.
"""

from qcsoc.fixedpoint import qmul

M32 = 0xFFFF_FFFF


def reference_samples(schedule, S, trig, env, g_end):
    out = [0] * g_end
    pulses = sorted(schedule, key=lambda p: p[0])
    for i, (t0, f, phi, amp, e0, dur) in enumerate(pulses):
        g0 = S * t0
        nxt = S * pulses[i + 1][0] if i + 1 < len(pulses) else g_end
        for g in range(g0, min(g0 + dur, nxt, g_end)):
            idx = min(e0 + g - g0, len(env) - 1)
            c, _ = trig.cos_sin((f * g + phi) & M32)
            out[g] = qmul(qmul(int(env[idx]), amp), c)
    return out


def drain_oracle(release_times, depth):
    """Cycle at which each enqueue of a one-per-cycle producer succeeds.

    The producer offers entry ``i`` every cycle until accepted; an entry
    leaves the FIFO at its release cycle.
    """
    t = 0
    held = []
    accepted = []
    for rel in release_times:
        while True:
            held = [r for r in held if r > t]
            if len(held) < depth:
                held.append(rel)
                accepted.append(t)
                break
            t += 1
    return accepted
