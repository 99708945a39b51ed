"""Random straight-line RV32IM programs for differential testing.

x31 holds DATA_BASE and is never written; memory operands are x31-relative
and aligned. Control flow only moves forward, so every program terminates
at its trailing ecall.
"""

import random

from qcsoc import isa
from qcsoc.bus import DATA_BASE
from qcsoc.isa import Instr

ALU_R = sorted(isa.R_OPS) + sorted(isa.M_OPS)
ALU_I = sorted(isa.I_OPS)
SHIFTS = sorted(isa.SHIFT_OPS)
LOADS = {"lb": 1, "lh": 2, "lw": 4, "lbu": 1, "lhu": 2}
STORES = {"sb": 1, "sh": 2, "sw": 4}
BRANCHES = sorted(isa.BRANCH_OPS)
INTERESTING = [0, 1, -1, 0x7FFF_FFFF, -0x8000_0000, 2047, -2048, 0xFFFF, 31, 32]


def _rd(rng):
    return rng.randrange(1, 31)


def _rs(rng):
    return rng.randrange(0, 32)


def _imm12(rng):
    return rng.choice([rng.randrange(-2048, 2048), rng.choice([0, 1, -1, 2047, -2048])])


def random_program(rng: random.Random, n: int, rv32m=True):
    """Return a list of instruction words (at most ``n`` + 3 long)."""
    alu_r = ALU_R if rv32m else sorted(isa.R_OPS)
    body = []
    # seed registers with interesting values
    seeds = []
    for r in range(1, 31):
        if rng.random() < 0.5:
            v = rng.choice(INTERESTING + [rng.getrandbits(32)]) & 0xFFFF_FFFF
            hi = (v + 0x800) >> 12 & 0xFFFFF
            lo = v - (hi << 12)
            lo = ((lo + 0x800) & 0xFFF) - 0x800
            seeds.append(Instr("lui", r, imm=hi << 12))
            seeds.append(Instr("addi", r, r, imm=lo))
    for _ in range(n):
        k = rng.random()
        if k < 0.30:
            body.append(Instr(rng.choice(alu_r), _rd(rng), _rs(rng), _rs(rng)))
        elif k < 0.50:
            body.append(Instr(rng.choice(ALU_I), _rd(rng), _rs(rng), imm=_imm12(rng)))
        elif k < 0.58:
            body.append(Instr(rng.choice(SHIFTS), _rd(rng), _rs(rng), imm=rng.randrange(32)))
        elif k < 0.68:
            op = rng.choice(sorted(LOADS))
            w = LOADS[op]
            body.append(Instr(op, _rd(rng), 31, imm=rng.randrange(0, 2048 // w) * w))
        elif k < 0.78:
            op = rng.choice(sorted(STORES))
            w = STORES[op]
            body.append(Instr(op, 0, 31, _rs(rng), imm=rng.randrange(0, 2048 // w) * w))
        elif k < 0.86:
            body.append(("branch", rng.choice(BRANCHES), _rs(rng), _rs(rng), rng.randrange(1, 12)))
        elif k < 0.89:
            body.append(("jal", rng.choice([0, _rd(rng)]), rng.randrange(1, 12)))
        elif k < 0.93:
            body.append(Instr("lui", _rd(rng), imm=rng.getrandbits(20) << 12))
        elif k < 0.96:
            body.append(Instr("auipc", _rd(rng), imm=rng.getrandbits(20) << 12))
        else:
            body.append(Instr("fence"))
    prologue = [Instr("lui", 31, imm=DATA_BASE)] + seeds
    end = len(prologue) + len(body)
    words = [isa.encode(i)[0] for i in prologue]
    for j, ins in enumerate(body):
        here = len(prologue) + j
        if not isinstance(ins, Instr):
            skip = min(ins[-1], end - here)
            if ins[0] == "branch":
                ins = Instr(ins[1], 0, ins[2], ins[3], 4 * skip)
            else:
                ins = Instr("jal", ins[1], imm=4 * skip)
        words.append(isa.encode(ins)[0])
    words.append(isa.encode(Instr("ecall"))[0])
    return words
