"""Cycle-stepped RV32I(+M) core with the pulse and settime extensions.

Timing is a per-instruction cost table rather than a staged pipeline:
every instruction costs one cycle, plus ``branch_taken_penalty`` for taken
branches and all jumps, plus the load latency of the region it reads.
Bus side effects of an instruction happen at its issue cycle.
"""

from dataclasses import dataclass, field
from typing import Optional

from .bus import BusFault, Stall
from .isa import IllegalInstruction, M_MNEMONICS, decode

M32 = 0xFFFF_FFFF


@dataclass
class PipelineModel:
    branch_taken_penalty: int = 3
    mmio_load_latency: int = 2
    ram_load_latency: int = 1

    def __post_init__(self):
        for k in ("branch_taken_penalty", "mmio_load_latency", "ram_load_latency"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")

    def cost(self, op, taken=False, region_kind=None):
        """Cycle cost of one retired instruction of mnemonic ``op``."""
        c = 1
        if op in ("jal", "jalr") or (taken and op.startswith("b") and op != "ebreak"):
            c += self.branch_taken_penalty
        if op in ("lb", "lh", "lw", "lbu", "lhu"):
            c += self.mmio_load_latency if region_kind == "mmio" else self.ram_load_latency
        return c


@dataclass
class StepReport:
    cycles_consumed: int
    retired_pc: Optional[int]
    events: list = field(default_factory=list)


@dataclass
class HaltReport:
    reason: str
    cycle: int
    exit_code: int = 0
    pc: int = 0
    detail: str = ""


class Halt(Exception):
    def __init__(self, reason, exit_code=0, detail=""):
        super().__init__(reason)
        self.reason = reason
        self.exit_code = exit_code
        self.detail = detail


class Misaligned(Exception):
    def __init__(self, addr):
        super().__init__(f"misaligned access at 0x{addr:08x}")
        self.addr = addr


def _s32(x):
    return x - 0x1_0000_0000 if x & 0x8000_0000 else x


class Core:
    """The control CPU. ``pulse_unit.issue(fields, treg)`` may raise ``Stall``."""

    def __init__(self, bus, pipeline=None, rv32m=True, pulse_unit=None, reset_pc=0):
        self.bus = bus
        self.pipeline = pipeline or PipelineModel()
        self.rv32m = rv32m
        self.pulse_unit = pulse_unit
        self.reset_pc = reset_pc
        self.regs = [0] * 32
        self._extra = [0]
        self._cache = {}
        self.trace = False
        self.watch = frozenset()
        self.events = []
        self.reset()

    # -- state ---------------------------------------------------------------

    def reset(self):
        self.regs[:] = [0] * 32
        self.pc = self.reset_pc
        self.cycle = 0
        self.treg = 0
        self.halted = None
        self.retired = 0
        self.events.clear()

    def invalidate(self, addr=None):
        """Drop cached decodes overlapping a written word (all when ``addr`` is None)."""
        if addr is None:
            self._cache.clear()
            return
        cache = self._cache
        if cache:
            a = addr & ~3
            for k in (a, a - 4, a - 8, a - 12):
                cache.pop(k, None)

    def invalidate_range(self, lo, hi):
        for k in [k for k in self._cache if lo - 12 <= k < hi]:
            del self._cache[k]

    # -- decode to closures ----------------------------------------------------

    def _fetch_words(self, pc):
        words = [self.bus.read32(pc)]
        if words[0] & 0x7F == 0x0B:
            for k in (4, 8, 12):
                try:
                    words.append(self.bus.read32(pc + k))
                except BusFault:
                    break
        return words

    def _build(self, pc):
        if pc & 3:
            raise Misaligned(pc)
        ins = decode(self._fetch_words(pc), pc)
        if ins.op in M_MNEMONICS and not self.rv32m:
            raise IllegalInstruction(pc, self.bus.read32(pc))
        fn, kind = self._make(ins, pc)
        ent = (fn, kind, ins)
        self._cache[pc] = ent
        return ent

    def _make(self, ins, pc):
        """Return (callable() -> next_pc, kind); kind 1 = branch, 2 = jump."""
        regs = self.regs
        op, rd, rs1, rs2, imm = ins.op, ins.rd, ins.rs1, ins.rs2, ins.imm
        nxt = (pc + ins.size) & M32
        bus = self.bus
        extra = self._extra
        pipe = self.pipeline
        lat = {"ram": pipe.ram_load_latency, "rom": pipe.ram_load_latency,
               "mmio": pipe.mmio_load_latency}

        def nop():
            return nxt

        if op in ("fence",):
            return nop, 0

        alu = _ALU.get(op)
        if alu is not None:
            if rd == 0:
                return nop, 0
            if op in _IMM_FORMS:
                def f():
                    regs[rd] = alu(regs[rs1], imm)
                    return nxt
            else:
                def f():
                    regs[rd] = alu(regs[rs1], regs[rs2])
                    return nxt
            return f, 0

        if op == "lui":
            if rd == 0:
                return nop, 0
            v = imm & M32

            def f():
                regs[rd] = v
                return nxt
            return f, 0
        if op == "auipc":
            if rd == 0:
                return nop, 0
            v = (pc + imm) & M32

            def f():
                regs[rd] = v
                return nxt
            return f, 0

        if op in _LOADS:
            width, signed = _LOADS[op]
            mask = width - 1
            sbit = 1 << (8 * width - 1)
            full = 1 << (8 * width)
            region_at = bus.region_at

            def f():
                a = (regs[rs1] + imm) & M32
                if a & mask:
                    raise Misaligned(a)
                r = region_at(a)
                if r is None:
                    raise BusFault(a)
                v = r.target.read(a - r.base, width)
                extra[0] = lat[r.kind]
                if signed and v & sbit:
                    v = (v - full) & M32
                if rd:
                    regs[rd] = v
                return nxt
            return f, 0

        if op in _STORES:
            width = _STORES[op]
            mask = width - 1
            write = bus.write

            def f():
                a = (regs[rs1] + imm) & M32
                if a & mask:
                    raise Misaligned(a)
                write(a, width, regs[rs2])
                return nxt
            return f, 0

        if op in _BRANCH:
            cmp = _BRANCH[op]
            tgt = (pc + imm) & M32

            def f():
                return tgt if cmp(regs[rs1], regs[rs2]) else nxt
            return f, 1

        if op == "jal":
            tgt = (pc + imm) & M32

            def f():
                if rd:
                    regs[rd] = nxt
                return tgt
            return f, 2
        if op == "jalr":
            def f():
                t = (regs[rs1] + imm) & ~1 & M32
                if rd:
                    regs[rd] = nxt
                return t
            return f, 2

        if op == "ecall":
            def f():
                raise Halt("program-exit", _s32(regs[10]))
            return f, 0
        if op == "ebreak":
            def f():
                raise Halt("breakpoint", _s32(regs[10]))
            return f, 0

        if op == "settime":
            def f():
                self.treg = regs[rs1]
                return nxt
            return f, 0

        if op == "pulse":
            p = ins.pulse

            def f():
                if self.pulse_unit is None:
                    raise Halt("illegal-instruction", detail="no pulse unit attached")
                self.pulse_unit.issue(p, self.treg)
                return nxt
            return f, 0

        raise IllegalInstruction(pc, 0)  # pragma: no cover

    # -- execution ---------------------------------------------------------------

    def _halt(self, reason, exit_code=0, detail=""):
        self.halted = HaltReport(reason, self.cycle, exit_code, self.pc, detail)
        self.events.append(("halt", self.cycle, self.pc, reason))
        return self.halted

    def step(self):
        """Execute exactly one instruction (or one stall cycle)."""
        if self.halted is not None:
            raise RuntimeError("core is halted")
        n0 = len(self.events)
        c0 = self.cycle
        pc = self.pc
        retired = self._exec_one()
        return StepReport(self.cycle - c0, pc if retired else None, self.events[n0:])

    def _exec_one(self):
        pc = self.pc
        try:
            ent = self._cache.get(pc) or self._build(pc)
            fn, kind, _ = ent
            npc = fn()
        except Stall as st:
            n = 1 if st.until is None else max(1, st.until - self.cycle)
            self.events.append(("stall", self.cycle, pc, n))
            self.cycle += n
            return False
        except Halt as h:
            self.cycle += 1
            self.retired += 1
            self._halt(h.reason, h.exit_code, h.detail)
            return True
        except Misaligned as e:
            self._halt("misaligned", detail=str(e))
            return False
        except BusFault as e:
            self._halt("bus-fault", detail=str(e))
            return False
        except IllegalInstruction as e:
            self._halt("illegal-instruction", detail=str(e))
            return False
        cost = 1 + self._extra[0]
        self._extra[0] = 0
        if kind == 2 or (kind == 1 and npc != (pc + 4) & M32):
            cost += self.pipeline.branch_taken_penalty
        if self.trace or pc in self.watch:
            self.events.append(("retire", self.cycle, pc, cost))
        self.cycle += cost
        self.retired += 1
        self.pc = npc
        return True

    def run(self, max_cycles=10_000_000):
        """Step until halt or ``cycle >= max_cycles``."""
        if self.halted is not None:
            return self.halted
        cache = self._cache
        extra = self._extra
        penalty = self.pipeline.branch_taken_penalty
        events = self.events
        watch = self.watch
        tracing = self.trace
        build = self._build
        while True:
            cycle = self.cycle
            pc = self.pc
            retired = self.retired
            try:
                # fast path: no exceptions expected
                while cycle < max_cycles:
                    self.cycle = cycle
                    ent = cache.get(pc)
                    if ent is None:
                        ent = build(pc)
                    fn, kind, _ = ent
                    npc = fn()
                    cost = 1 + extra[0]
                    extra[0] = 0
                    if kind and (kind == 2 or npc != pc + 4):
                        cost += penalty
                    if tracing or pc in watch:
                        events.append(("retire", cycle, pc, cost))
                    cycle += cost
                    retired += 1
                    pc = npc
                self.cycle, self.pc, self.retired = cycle, pc, retired
                return self._halt("timeout", detail=f"max_cycles={max_cycles}")
            except (Stall, Halt, Misaligned, BusFault, IllegalInstruction):
                self.pc, self.retired = pc, retired
                self.cycle = cycle
                extra[0] = 0
                self._exec_one()  # replays the instruction through the slow path
                if self.halted is not None:
                    return self.halted


def _div(a, b):
    a, b = _s32(a), _s32(b)
    if b == 0:
        return M32
    if a == -0x8000_0000 and b == -1:
        return 0x8000_0000
    q = abs(a) // abs(b)
    return (q if (a < 0) == (b < 0) else -q) & M32


def _divu(a, b):
    return M32 if b == 0 else a // b


def _rem(a, b):
    a, b = _s32(a), _s32(b)
    if b == 0:
        return a & M32
    if a == -0x8000_0000 and b == -1:
        return 0
    r = abs(a) % abs(b)
    return (r if a >= 0 else -r) & M32


def _remu(a, b):
    return a if b == 0 else a % b


_ALU = {
    "add": lambda a, b: (a + b) & M32,
    "sub": lambda a, b: (a - b) & M32,
    "sll": lambda a, b: (a << (b & 31)) & M32,
    "slt": lambda a, b: int(_s32(a) < _s32(b)),
    "sltu": lambda a, b: int(a < b),
    "xor": lambda a, b: a ^ b,
    "srl": lambda a, b: a >> (b & 31),
    "sra": lambda a, b: (_s32(a) >> (b & 31)) & M32,
    "or": lambda a, b: a | b,
    "and": lambda a, b: a & b,
    "addi": lambda a, i: (a + i) & M32,
    "slti": lambda a, i: int(_s32(a) < i),
    "sltiu": lambda a, i: int(a < (i & M32)),
    "xori": lambda a, i: (a ^ i) & M32,
    "ori": lambda a, i: (a | i) & M32,
    "andi": lambda a, i: a & i & M32,
    "slli": lambda a, i: (a << i) & M32,
    "srli": lambda a, i: a >> i,
    "srai": lambda a, i: (_s32(a) >> i) & M32,
    "mul": lambda a, b: (a * b) & M32,
    "mulh": lambda a, b: ((_s32(a) * _s32(b)) >> 32) & M32,
    "mulhsu": lambda a, b: ((_s32(a) * b) >> 32) & M32,
    "mulhu": lambda a, b: (a * b) >> 32,
    "div": _div,
    "divu": _divu,
    "rem": _rem,
    "remu": _remu,
}
_IMM_FORMS = frozenset(["addi", "slti", "sltiu", "xori", "ori", "andi", "slli", "srli", "srai"])
_LOADS = {"lb": (1, True), "lh": (2, True), "lw": (4, False), "lbu": (1, False), "lhu": (2, False)}
_STORES = {"sb": 1, "sh": 2, "sw": 4}
_BRANCH = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: _s32(a) < _s32(b),
    "bge": lambda a, b: _s32(a) >= _s32(b),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}
