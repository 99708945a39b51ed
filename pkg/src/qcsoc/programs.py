"""Guest programs for the fast-reset, calibration, Rabi and latency experiments.

Each builder returns an :class:`ExperimentScript`: assembly text, the
config it expects and a descriptor the test harness checks against.
Programs address peripherals through a base register loaded with an
address macro (``li s0, RD_DEC_FREQ_ADDR(ADC)``) and fixed register offsets,
because absolute MMIO addresses do not fit a 12-bit load/store offset.

Mailbox layouts (all offsets from DATA_BASE):

* fast reset: +0x0 first outcome, +0x4 second outcome.
* calibration: +0x0 final amplitude, +0x4 iteration count,
  +0x10 onward one (amplitude, k << 16 | ones) pair per iteration.
* Rabi scan: +0x0 address of the results table, +0x4 number of points,
  +0x100 onward one ones-count per amplitude.
"""

import math
from dataclasses import dataclass, field

from .asm import assemble
from .bus import DATA_BASE
from .config import Config

LEAD = 32          # cycles between reading RefTime and the first scheduled pulse
READOUT_AMP = 0x7FFF
READOUT_DUR = 1024  # DAC samples
PI_DUR = 64         # DAC samples of a rectangular pi pulse
X_OFFSET = 96       # readout t0 -> conditional X t0, clears the worst-case poll phase
CAL_LOG = 0x10
RABI_RESULTS = 0x100


@dataclass
class ExperimentScript:
    name: str
    source: str
    config: Config
    expected: dict = field(default_factory=dict)
    mailbox: dict = field(default_factory=dict)

    def assemble(self):
        return assemble(self.source)


def pi_amplitude(plant, duration=PI_DUR):
    """Analytic rectangular-pulse amplitude giving a pi rotation in ``duration`` samples."""
    return plant.pi_area() * 32767.0 / duration


def nominal_pi_amp(cfg):
    """Integer pi amplitude for the plant with no amplitude error."""
    return int(round(math.pi * 32767.0 / (cfg.plant.coupling * PI_DUR)))


def readout_constants(cfg):
    p = cfg.plant
    S, Sa = cfg.samples_per_cycle_dac, cfg.samples_per_cycle_adc
    return {
        "DRV": p.drive_channel,
        "RO_CH": p.readout_dac,
        "ADC": p.readout_adc,
        "RO_FREQ": (p.readout_freq * Sa // S) & 0xFFFF_FFFF,
        "RO_AMP": READOUT_AMP,
        "RO_DUR": READOUT_DUR,
        "DEC_FREQ": p.readout_freq & 0xFFFF_FFFF,
        "DEC_PHASE": (-p.readout_freq * p.delay) & 0xFFFF_FFFF,
        "WINDOW": READOUT_DUR * Sa // S,
        "ARM_DELAY": -(-p.delay // Sa),
        "LEAD": LEAD,
        "PI_DUR": PI_DUR,
    }


def _equs(consts):
    return "".join(f".equ {k}, {v:#x}\n" if isinstance(v, int) and v > 9 else f".equ {k}, {v}\n"
                   for k, v in consts.items())


_PROLOGUE = """\
_start:
    li   s0, RD_DEC_FREQ_ADDR(ADC)      # decoder register block
    li   s1, SG_FREQ_ADDR(DRV)          # drive generator register block
    li   s2, SYS_REFTIME_ADDR
    li   t0, DEC_FREQ
    sw   t0, RD_DEC_FREQ(s0)
    li   t0, DEC_PHASE
    sw   t0, RD_DEC_PHASE(s0)
    li   t0, WINDOW
    sw   t0, RD_WINDOW(s0)
    sw   zero, RD_THRESHOLD(s0)
    sw   zero, RD_ROTATION(s0)
"""

# a1 = readout t0; returns the outcome in a0
_MEASURE_AT = """\
measure_at:
    settime a1
    pulse RO_CH, RO_FREQ, 0, RO_AMP, 0, RO_DUR, 0
    addi t1, a1, ARM_DELAY
    sw   t1, RD_ARM(s0)
m_poll:
    lw   t0, RD_RESULT(s0)
    bge  t0, zero, m_poll
    andi a0, t0, 1
    ret
"""


def build_measure(cfg=None, prep_amp=0, alternate=False):
    """Optional rectangular prep pulse, then one readout; exits with the outcome.

    With ``alternate`` the prep pulse is played on odd shots only (the shot
    number comes from the SYS block), so a pi-amplitude prep gives the
    state sequence 0, 1, 0, 1, ...
    """
    cfg = cfg or Config()
    c = readout_constants(cfg)
    c["PREP_AMP"] = prep_amp
    c["PULSE_CYC"] = -(-PI_DUR // cfg.samples_per_cycle_dac)
    prep = ""
    if prep_amp:
        prep = """\
    settime a1
    pulse DRV, 0, 0, PREP_AMP, 0, PI_DUR, 0
no_prep:
    addi a1, a1, PULSE_CYC
"""
        if alternate:
            prep = """\
    li   t1, SYS_SHOT_ADDR
    lw   t1, 0(t1)
    andi t1, t1, 1
    addi a1, a1, 16             # covers the shot-register read and branch
    beqz t1, no_prep
""" + prep
    src = _equs(c) + _PROLOGUE + """\
    lw   t0, 0(s2)
    addi a1, t0, LEAD
""" + prep + """\
    call measure_at
    li   t0, DATA_BASE
    sw   a0, 0(t0)
    ecall
""" + _MEASURE_AT
    return ExperimentScript("measure", src, cfg, {"exit_code": "outcome"},
                            {"outcome": DATA_BASE})


def build_fast_reset(variant="branchless", cfg=None, prep_amp=None, x_amp=None):
    """Measure, conditionally apply X, measure again; exit code is the second outcome.

    ``prep_amp`` is the amplitude of an optional rectangular pulse before the
    first readout (the default pi/2 makes P(1) = 0.5). The branchless variant
    preloads idle into bank 0 and X into bank 1, because RESULT bit 0 is the
    outcome and a multiplex write with bit 0 set selects bank 1.
    """
    if variant not in ("branch", "branchless"):
        raise ValueError("variant must be 'branch' or 'branchless'")
    cfg = cfg or Config()
    S = cfg.samples_per_cycle_dac
    c = readout_constants(cfg)
    pi_amp = nominal_pi_amp(cfg)
    c["X_AMP"] = pi_amp if x_amp is None else x_amp
    c["PREP_AMP"] = (pi_amp + 1) // 2 if prep_amp is None else prep_amp
    c["X_OFFSET"] = X_OFFSET
    c["PULSE_CYC"] = -(-PI_DUR // S)
    c["VALID0"] = 0x8000_0000     # RESULT with valid set and outcome 0

    body = ["    lw   t0, 0(s2)", "    addi a1, t0, LEAD"]
    if c["PREP_AMP"]:
        body += ["    settime a1",
                 "    pulse DRV, 0, 0, PREP_AMP, 0, PI_DUR, 0",
                 "    addi a1, a1, PULSE_CYC"]
    body += ["    addi s4, a1, X_OFFSET              # conditional X t0"]
    if variant == "branchless":
        body += ["    settime s4",
                 "    pulse DRV, 0, 0, 0, 0, PI_DUR, 0        # bank 0: idle",
                 "    pulse DRV, 0, 0, X_AMP, 0, PI_DUR, 1    # bank 1: X"]
    body += ["    settime a1",
             "    pulse RO_CH, RO_FREQ, 0, RO_AMP, 0, RO_DUR, 0",
             "    addi t1, a1, ARM_DELAY",
             "    sw   t1, RD_ARM(s0)"]
    if variant == "branch":
        body += ["    settime s4", "    li   t2, VALID0"]
    body += ["poll:",
             "    lw   t0, RD_RESULT(s0)",
             "    bge  t0, zero, poll"]
    if variant == "branchless":
        body += ["cond_begin:",
                 "    lw   t0, RD_RESULT(s0)",
                 "    sw   t0, RD_MULTIPLEX(s0)",
                 "cond_end:"]
    else:
        body += ["cond_begin:",
                 "    lw   t0, RD_RESULT(s0)",
                 "    beq  t0, t2, skip",
                 "cond_end_x:",
                 "    pulse DRV, 0, 0, X_AMP, 0, PI_DUR, 0",
                 "skip:",
                 "cond_end_skip:"]
    body += ["    andi t0, t0, 1",
             "    li   t3, DATA_BASE",
             "    sw   t0, 0(t3)",
             "    addi a1, s4, PULSE_CYC             # second readout after the X slot",
             "    call measure_at",
             "    li   t3, DATA_BASE",
             "    sw   a0, 4(t3)",
             "    ecall"]
    src = _equs(c) + _PROLOGUE + "\n".join(body) + "\n" + _MEASURE_AT
    pipe = cfg.pipeline
    lw_cost = pipe.cost("lw", region_kind="mmio")
    expected = {
        "exit_code": 0,
        "branchless_section": lw_cost + pipe.cost("sw"),
        "branch_taken_section": lw_cost + pipe.cost("beq", taken=True),
        "branch_not_taken_section": lw_cost + pipe.cost("beq", taken=False),
    }
    return ExperimentScript(f"fast_reset_{variant}", src, cfg, expected,
                            {"first": DATA_BASE, "second": DATA_BASE + 4})


def section_labels(variant):
    if variant == "branchless":
        return "cond_begin", ("cond_end",)
    return "cond_begin", ("cond_end_x", "cond_end_skip")


def build_amplitude_calibration(cfg=None, shots_per_iter=100, max_iters=50,
                                stages=(3, 9, 27), deadband=25, initial_amp=None):
    """On-chip pi-amplitude calibration by error amplification.

    Each iteration plays ``k`` pi/2 pulses (amplitude a/2, written through
    MMIO so ``a`` can change at run time) and measures, ``shots_per_iter``
    times. Instead of resetting, each outcome is XORed with the previous one:
    the rotation from either pole flips the state with the same probability.
    With ``d = s * (2 * ones - shots)`` and ``s = (-1)^((k-1)/2)`` the update is
    ``a -= ((a * d) / (k * shots)) * 20861 >> 15`` (20861 = 2/pi in Q15).
    When ``|2 * ones - shots| <= deadband`` the stage advances to the next k;
    passing the last stage halts with exit code 0, and running out of
    iterations halts with exit code 2.
    """
    cfg = cfg or Config()
    if not cfg.rv32m:
        raise ValueError("calibration needs the M extension")
    if shots_per_iter < 1 or shots_per_iter > 2047:
        raise ValueError("shots_per_iter must be in [1, 2047]")
    if any(k < 1 or k % 2 == 0 for k in stages):
        raise ValueError("stages must be odd repetition counts")
    S = cfg.samples_per_cycle_dac
    c = readout_constants(cfg)
    c.update({
        "SHOTS": shots_per_iter, "MAX_ITERS": max_iters, "DEADBAND": deadband,
        "A0": nominal_pi_amp(cfg) if initial_amp is None else initial_amp,
        "PULSE_CYC": -(-PI_DUR // S), "GAIN": 20861, "CAL_LOG": CAL_LOG,
    })
    ktable = "\n".join(f"    .word {k}" for k in stages)
    src = _equs(c) + _PROLOGUE + """\
    sw   zero, SG_FREQ(s1)
    sw   zero, SG_PHASE(s1)
    sw   zero, SG_ENV_START(s1)
    sw   zero, SG_FLAGS(s1)
    li   t0, PI_DUR
    sw   t0, SG_DURATION(s1)
    li   s3, A0                 # candidate pi amplitude
    la   s10, ktable
    lw   s4, 0(s10)             # repetition count k
    li   s5, 0                  # iterations done
    li   s8, 0                  # previous outcome
    li   s9, DATA_BASE + CAL_LOG
iter:
    li   t0, MAX_ITERS
    bge  s5, t0, fail
    srai t0, s3, 1
    sw   t0, SG_AMP(s1)         # pi/2 pulse amplitude
    li   s6, SHOTS
    li   s7, 0                  # ones (after XOR with the previous outcome)
shot:
    slli t1, s4, 3              # 8 cycles of lead per pulse covers the issue loop
    lw   t0, 0(s2)
    add  t3, t0, t1
    addi t3, t3, LEAD
    mv   t4, s4
pulses:
    sw   t3, SG_T0(s1)
    addi t3, t3, PULSE_CYC
    addi t4, t4, -1
    bnez t4, pulses
    mv   a1, t3
    call measure_at
    xor  t1, a0, s8
    mv   s8, a0
    add  s7, s7, t1
    addi s6, s6, -1
    bnez s6, shot
    sw   s3, 0(s9)              # log amplitude, k and ones
    slli t0, s4, 16
    or   t0, t0, s7
    sw   t0, 4(s9)
    addi s9, s9, 8
    addi s5, s5, 1
    slli t0, s7, 1
    addi t0, t0, -SHOTS         # 2 * ones - shots
    mv   t1, t0
    bgez t1, absd
    neg  t1, t1
absd:
    li   t2, DEADBAND
    bgt  t1, t2, update
    addi s10, s10, 4            # next stage
    lw   s4, 0(s10)
    beqz s4, done
    j    iter
update:
    andi t2, s4, 2              # k = 3 mod 4 flips the response sign
    beqz t2, signed
    neg  t0, t0
signed:
    mul  t1, s3, t0
    li   t2, SHOTS
    mul  t2, t2, s4
    div  t1, t1, t2
    li   t2, GAIN
    mul  t1, t1, t2
    srai t1, t1, 15
    sub  s3, s3, t1
    j    iter
done:
    li   a0, 0
    j    finish
fail:
    li   a0, 2
finish:
    li   t0, DATA_BASE
    sw   s3, 0(t0)
    sw   s5, 4(t0)
    ecall
""" + _MEASURE_AT + "ktable:\n" + ktable + "\n    .word 0\n"
    p = cfg.plant
    expected = {"pi_amp": pi_amplitude(p), "tolerance": 0.01, "exit_code": 0}
    return ExperimentScript("amplitude_calibration", src, cfg, expected,
                            {"amplitude": DATA_BASE, "iterations": DATA_BASE + 4,
                             "log": DATA_BASE + CAL_LOG})


def read_calibration(soc):
    """(final amplitude, iterations, [(amplitude, k, ones), ...]) from the mailbox."""
    d = soc.data
    amp = d.read32(0)
    n = d.read32(4)
    log = []
    for i in range(n):
        a = d.read32(CAL_LOG + 8 * i)
        w = d.read32(CAL_LOG + 8 * i + 4)
        log.append((a - (1 << 32) if a & 0x8000_0000 else a, w >> 16, w & 0xFFFF))
    return (amp - (1 << 32) if amp & 0x8000_0000 else amp), n, log


def replay_calibration(log, shots_per_iter, stages=(3, 9, 27), deadband=25, exact=False):
    """Host re-implementation of the update law driven by the logged outcomes.

    With ``exact`` it mirrors the guest's integer arithmetic; otherwise it
    uses floating point. Returns the amplitude sequence including the final value.
    """
    a = float(log[0][0]) if log else 0.0
    seq = [a]
    stage = 0
    for _, k, ones in log:
        assert k == stages[stage]
        d = 2 * ones - shots_per_iter
        if abs(d) <= deadband:
            stage += 1
            seq.append(a)
            continue
        if k & 2:
            d = -d
        if exact:
            q = int(a) * d
            den = shots_per_iter * k
            q = abs(q) // den * (1 if q >= 0 else -1)
            a = int(a) - ((q * 20861) >> 15)
        else:
            a = a - a * d * (2.0 / math.pi) / (k * shots_per_iter)
        seq.append(a)
    return seq


def build_rabi_scan(amps, shots=200, cfg=None):
    """For each amplitude play one rectangular pulse per shot and count flips."""
    cfg = cfg or Config()
    S = cfg.samples_per_cycle_dac
    c = readout_constants(cfg)
    c.update({"SHOTS": shots, "NPTS": len(amps), "PULSE_CYC": -(-PI_DUR // S),
              "RESULTS": RABI_RESULTS})
    table = "\n".join(f"    .word {int(a) & 0xFFFF}" for a in amps)
    src = _equs(c) + _PROLOGUE + """\
    sw   zero, SG_FREQ(s1)
    sw   zero, SG_PHASE(s1)
    sw   zero, SG_ENV_START(s1)
    sw   zero, SG_FLAGS(s1)
    li   t0, PI_DUR
    sw   t0, SG_DURATION(s1)
    li   t0, DATA_BASE
    li   t1, DATA_BASE + RESULTS
    sw   t1, 0(t0)
    li   t1, NPTS
    sw   t1, 4(t0)
    la   s3, amps
    li   s4, NPTS
    li   s9, DATA_BASE + RESULTS
    li   s8, 0
point:
    lw   t0, 0(s3)
    sw   t0, SG_AMP(s1)
    li   s6, SHOTS
    li   s7, 0
shot:
    lw   t0, 0(s2)
    addi t3, t0, LEAD
    sw   t3, SG_T0(s1)
    addi a1, t3, PULSE_CYC
    call measure_at
    xor  t1, a0, s8
    mv   s8, a0
    add  s7, s7, t1
    addi s6, s6, -1
    bnez s6, shot
    sw   s7, 0(s9)
    addi s9, s9, 4
    addi s3, s3, 4
    addi s4, s4, -1
    bnez s4, point
    li   a0, 0
    ecall
""" + _MEASURE_AT + "amps:\n" + table + "\n"
    return ExperimentScript("rabi_scan", src, cfg,
                            {"pi_amp": pi_amplitude(cfg.plant), "tolerance": 0.02},
                            {"results": DATA_BASE + RABI_RESULTS, "count": DATA_BASE + 4})


def read_rabi(soc, npts):
    return [soc.data.read32(RABI_RESULTS + 4 * i) for i in range(npts)]


def build_latency_probe(cfg=None):
    """Same pulse scheduled once through MMIO stores and once by the pulse instruction."""
    cfg = cfg or Config()
    c = readout_constants(cfg)
    src = _equs(c) + _PROLOGUE + """\
    li   a2, 0x08000000
    li   a3, 0x20000000
    li   a4, 0x7FFF
    li   a6, PI_DUR
    lw   t0, 0(s2)
    addi t3, t0, 64
mmio_begin:
    sw   a2, SG_FREQ(s1)
    sw   a3, SG_PHASE(s1)
    sw   a4, SG_AMP(s1)
    sw   zero, SG_ENV_START(s1)
    sw   a6, SG_DURATION(s1)
    sw   t3, SG_T0(s1)
mmio_end:
    addi t3, t3, 8
    settime t3
pulse_begin:
    pulse DRV, 0x08000000, 0x20000000, 0x7FFF, 0, PI_DUR, 0
pulse_end:
    li   a0, 0
    ecall
"""
    return ExperimentScript("latency_probe", src, cfg, {"mmio_section": 6, "pulse_section": 1})


BUILTINS = {
    "measure": lambda cfg: build_measure(cfg),
    "measure_alternating": lambda cfg: build_measure(cfg, nominal_pi_amp(cfg), alternate=True),
    "fast_reset_branch": lambda cfg: build_fast_reset("branch", cfg),
    "fast_reset_branchless": lambda cfg: build_fast_reset("branchless", cfg),
    "amplitude_calibration": lambda cfg: build_amplitude_calibration(cfg),
    "rabi_scan": lambda cfg: build_rabi_scan([round(i * 32767 / 20) for i in range(21)], cfg=cfg),
    "latency_probe": lambda cfg: build_latency_probe(cfg),
}


def builtin(name, cfg=None):
    try:
        return BUILTINS[name](cfg or Config())
    except KeyError:
        raise KeyError(f"unknown builtin program {name!r}; choose from {', '.join(BUILTINS)}") from None


def check_closure(unit, bus):
    """Addresses of every MMIO symbol the unit used that fall outside the map."""
    bad = []
    for name, args, value in unit.mmio_refs:
        if bus.region_at(value & 0xFFFF_FFFF) is None:
            bad.append((name, args, value))
    return bad
