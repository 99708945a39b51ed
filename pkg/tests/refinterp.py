"""Naive single-cycle RV32IM interpreter used as an architectural oracle.

It decodes raw words itself (no shared code with the simulator) and keeps
memory as a dict of bytes. Only architectural state is modelled: no cycle
costs, no MMIO.
"""

M = 0xFFFF_FFFF


def sx(v, bits):
    v &= (1 << bits) - 1
    return v - (1 << bits) if v >> (bits - 1) else v


def signed(v):
    return sx(v, 32)


class RefCPU:
    def __init__(self, mem_base, mem_size, code_base=0):
        self.x = [0] * 32
        self.pc = code_base
        self.mem = {}
        self.mem_base = mem_base
        self.mem_size = mem_size
        self.halted = False
        self.exit_code = None

    def load_code(self, words, base=0):
        for i, w in enumerate(words):
            self.store(base + 4 * i, w, 4)

    def load(self, addr, n):
        return sum(self.mem.get(addr + i, 0) << (8 * i) for i in range(n))

    def store(self, addr, value, n):
        for i in range(n):
            self.mem[addr + i] = (value >> (8 * i)) & 0xFF

    def set(self, rd, v):
        if rd:
            self.x[rd] = v & M

    def step(self):
        w = self.load(self.pc, 4)
        op = w & 0x7F
        rd = (w >> 7) & 31
        f3 = (w >> 12) & 7
        r1 = (w >> 15) & 31
        r2 = (w >> 20) & 31
        f7 = w >> 25
        a = self.x[r1]
        b = self.x[r2]
        npc = (self.pc + 4) & M
        if op == 0x37:
            self.set(rd, w & 0xFFFFF000)
        elif op == 0x17:
            self.set(rd, self.pc + (w & 0xFFFFF000))
        elif op == 0x6F:
            off = sx(((w >> 31) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11)
                     | (((w >> 21) & 0x3FF) << 1), 21)
            self.set(rd, npc)
            npc = (self.pc + off) & M
        elif op == 0x67:
            t = (a + sx(w >> 20, 12)) & ~1 & M
            self.set(rd, npc)
            npc = t
        elif op == 0x63:
            off = sx(((w >> 31) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5)
                     | (((w >> 8) & 0xF) << 1), 13)
            take = {0: a == b, 1: a != b, 4: signed(a) < signed(b), 5: signed(a) >= signed(b),
                    6: a < b, 7: a >= b}[f3]
            if take:
                npc = (self.pc + off) & M
        elif op == 0x03:
            addr = (a + sx(w >> 20, 12)) & M
            n = {0: 1, 1: 2, 2: 4, 4: 1, 5: 2}[f3]
            v = self.load(addr, n)
            if f3 in (0, 1):
                v = sx(v, 8 * n)
            self.set(rd, v)
        elif op == 0x23:
            addr = (a + sx(((w >> 25) << 5) | ((w >> 7) & 31), 12)) & M
            n = {0: 1, 1: 2, 2: 4}[f3]
            self.store(addr, b, n)
        elif op == 0x13:
            imm = sx(w >> 20, 12)
            sh = r2
            if f3 == 0:
                v = a + imm
            elif f3 == 2:
                v = int(signed(a) < imm)
            elif f3 == 3:
                v = int(a < (imm & M))
            elif f3 == 4:
                v = a ^ imm
            elif f3 == 6:
                v = a | imm
            elif f3 == 7:
                v = a & imm
            elif f3 == 1:
                v = a << sh
            else:
                v = (signed(a) >> sh) if f7 == 0x20 else (a >> sh)
            self.set(rd, v)
        elif op == 0x33:
            if f7 == 1:
                self.set(rd, self._muldiv(f3, a, b))
            else:
                sh = b & 31
                v = {
                    0: (a - b) if f7 == 0x20 else (a + b),
                    1: a << sh,
                    2: int(signed(a) < signed(b)),
                    3: int(a < b),
                    4: a ^ b,
                    5: (signed(a) >> sh) if f7 == 0x20 else (a >> sh),
                    6: a | b,
                    7: a & b,
                }[f3]
                self.set(rd, v)
        elif op == 0x73 and w == 0x73:
            self.halted = True
            self.exit_code = signed(self.x[10])
        elif op == 0x0F:
            pass
        else:
            raise ValueError(f"reference interpreter: unsupported word {w:#010x}")
        self.pc = npc

    @staticmethod
    def _muldiv(f3, a, b):
        sa, sb = signed(a), signed(b)
        if f3 == 0:
            return sa * sb
        if f3 == 1:
            return (sa * sb) >> 32
        if f3 == 2:
            return (sa * b) >> 32
        if f3 == 3:
            return (a * b) >> 32
        if f3 == 4:
            if b == 0:
                return M
            if sa == -2 ** 31 and sb == -1:
                return sa
            q = abs(sa) // abs(sb)
            return q if (sa < 0) == (sb < 0) else -q
        if f3 == 5:
            return M if b == 0 else a // b
        if f3 == 6:
            if b == 0:
                return sa
            if sa == -2 ** 31 and sb == -1:
                return 0
            r = abs(sa) % abs(sb)
            return -r if sa < 0 else r
        return a if b == 0 else a % b

    def run(self, max_steps=1_000_000):
        n = 0
        while not self.halted and n < max_steps:
            self.step()
            n += 1
        return n
