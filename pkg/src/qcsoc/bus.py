"""Address map, memories and the single-master interconnect.

Routing is by 256-byte page; the page table is filled lazily from the
region list so two buses built from the same map route identically.
"""

import sys

M32 = 0xFFFF_FFFF
PAGE_SHIFT = 8

PROG_BASE = 0x0000_0000
PROG_SIZE = 0x1_0000
DATA_BASE = 0x0010_0000
DATA_SIZE = 0x1_0000
ENV_BASE = 0x2000_0000
RDBUF_BASE = 0x3000_0000
MEM_STRIDE = 0x1_0000
SG_BASE = 0x4000_0000
RD_BASE = 0x4100_0000
REG_STRIDE = 0x100
SYS_BASE = 0x4200_0000

# signal generator register offsets
SG_FREQ = 0x00
SG_FLAGS = 0x04
SG_PHASE = 0x08
SG_AMP = 0x0C
SG_ENV_START = 0x10
SG_DURATION = 0x14
SG_T0 = 0x18
SG_ERRFLAGS = 0x1C

# decoder register offsets
RD_DEC_FREQ = 0x00
RD_DEC_PHASE = 0x04
RD_WINDOW = 0x08
RD_THRESHOLD = 0x0C
RD_RESULT = 0x10
RD_MULTIPLEX = 0x14
RD_CAPTURE_CTRL = 0x18
RD_ERRFLAGS = 0x1C
RD_I = 0x20
RD_Q = 0x24
RD_ROTATION = 0x28
RD_ARM = 0x2C
RD_CAPTURE_COUNT = 0x30

# system block
SYS_TREG = 0x00
SYS_REFTIME = 0x04
SYS_SHOT = 0x08

SG_REGS = {
    "FREQ": SG_FREQ, "FLAGS": SG_FLAGS, "PHASE": SG_PHASE, "AMP": SG_AMP,
    "ENV_START": SG_ENV_START, "DURATION": SG_DURATION, "T0": SG_T0,
    "ERRFLAGS": SG_ERRFLAGS,
}
RD_REGS = {
    "DEC_FREQ": RD_DEC_FREQ, "DEC_PHASE": RD_DEC_PHASE, "WINDOW": RD_WINDOW,
    "THRESHOLD": RD_THRESHOLD, "RESULT": RD_RESULT, "MULTIPLEX": RD_MULTIPLEX,
    "CAPTURE_CTRL": RD_CAPTURE_CTRL, "ERRFLAGS": RD_ERRFLAGS, "I": RD_I, "Q": RD_Q,
    "ROTATION": RD_ROTATION, "ARM": RD_ARM, "CAPTURE_COUNT": RD_CAPTURE_COUNT,
}
SYS_REGS = {"TREG": SYS_TREG, "REFTIME": SYS_REFTIME, "SHOT": SYS_SHOT}


def sg_addr(i, off=0):
    return SG_BASE + i * REG_STRIDE + off


def rd_addr(i, off=0):
    return RD_BASE + i * REG_STRIDE + off


def env_addr(i):
    return ENV_BASE + i * MEM_STRIDE


def rdbuf_addr(i):
    return RDBUF_BASE + i * MEM_STRIDE


def SG_PHASE_ADDR(i):
    return sg_addr(i, SG_PHASE)


def RD_RES_ADDR(i):
    return rd_addr(i, RD_RESULT)


def MULTIPLEX_REG_ADDR(i):
    return rd_addr(i, RD_MULTIPLEX)


def address_macros():
    """Function-style constants available to assembly sources."""
    macros = {
        "ENV_ADDR": env_addr, "RDBUF_ADDR": rdbuf_addr,
        "MULTIPLEX_REG_ADDR": MULTIPLEX_REG_ADDR,
    }
    for name, off in SG_REGS.items():
        macros[f"SG_{name}_ADDR"] = (lambda o: lambda i: sg_addr(i, o))(off)
    for name, off in RD_REGS.items():
        macros[f"RD_{name}_ADDR"] = (lambda o: lambda i: rd_addr(i, o))(off)
    macros["RD_RES_ADDR"] = RD_RES_ADDR
    return macros


def address_constants():
    consts = {
        "PROG_BASE": PROG_BASE, "DATA_BASE": DATA_BASE, "ENV_BASE": ENV_BASE,
        "RDBUF_BASE": RDBUF_BASE, "SG_BASE": SG_BASE, "RD_BASE": RD_BASE,
        "SYS_BASE": SYS_BASE, "REG_STRIDE": REG_STRIDE, "MEM_STRIDE": MEM_STRIDE,
    }
    for name, off in SYS_REGS.items():
        consts[f"SYS_{name}_ADDR"] = SYS_BASE + off
    for name, off in SG_REGS.items():
        consts[f"SG_{name}"] = off
    for name, off in RD_REGS.items():
        consts[f"RD_{name}"] = off
    return consts


class BusFault(Exception):
    def __init__(self, addr, reason="unmapped"):
        super().__init__(f"bus fault at 0x{addr & M32:08x}: {reason}")
        self.addr = addr & M32
        self.reason = reason


class OverlapError(ValueError):
    def __init__(self, new, old):
        super().__init__(f"region {new.name} [0x{new.base:08x}, +0x{new.size:x}) overlaps "
                         f"{old.name} [0x{old.base:08x}, +0x{old.size:x})")
        self.region = old


class Stall(Exception):
    """Raised by a peripheral write that must be retried.

    ``until`` is the first cycle at which a retry can succeed; the core
    skips the intervening retries, which would all stall again.
    """

    def __init__(self, until=None):
        super().__init__(f"stall until cycle {until}")
        self.until = until


class Memory:
    """Byte-addressable little-endian storage for ram/rom regions."""

    def __init__(self, size, readonly=False):
        self.size = size
        self.data = bytearray(size)
        self.readonly = readonly
        self.before = None      # sync hook run before any access
        self.on_write = None    # called with the byte offset after writes
        if sys.byteorder == "little":
            self.words = memoryview(self.data).cast("I")
        else:   # pragma: no cover
            self.words = None

    def read32(self, off):
        if self.before is not None:
            self.before()
        if self.words is not None:
            return self.words[off >> 2]
        return int.from_bytes(self.data[off:off + 4], "little")  # pragma: no cover

    def write32(self, off, value):
        if self.readonly:
            raise BusFault(off, "write to read-only memory")
        if self.before is not None:
            self.before()
        if self.words is not None:
            self.words[off >> 2] = value & M32
        else:   # pragma: no cover
            self.data[off:off + 4] = (value & M32).to_bytes(4, "little")
        if self.on_write is not None:
            self.on_write(off)

    def read(self, off, width):
        if width == 4:
            return self.read32(off)
        if self.before is not None:
            self.before()
        return int.from_bytes(self.data[off:off + width], "little")

    def write(self, off, width, value):
        if width == 4:
            return self.write32(off, value)
        if self.readonly:
            raise BusFault(off, "write to read-only memory")
        if self.before is not None:
            self.before()
        self.data[off:off + width] = (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")
        if self.on_write is not None:
            self.on_write(off)

    def load(self, blob, off=0):
        self.data[off:off + len(blob)] = blob
        if self.on_write is not None:
            self.on_write(None)

    def clear(self):
        self.data[:] = bytes(self.size)
        if self.on_write is not None:
            self.on_write(None)


class Registers:
    """Adapter turning an object with ``mmio_read``/``mmio_write`` into a region target."""

    def __init__(self, owner, before=None):
        self.owner = owner
        self.before = before

    def read32(self, off):
        if self.before is not None:
            self.before()
        return self.owner.mmio_read(off) & M32

    def write32(self, off, value):
        if self.before is not None:
            self.before()
        self.owner.mmio_write(off, value & M32)

    def read(self, off, width):
        if width != 4:
            raise BusFault(off, "sub-word MMIO access")
        return self.read32(off)

    def write(self, off, width, value):
        if width != 4:
            raise BusFault(off, "sub-word MMIO access")
        self.write32(off, value)


class Region:
    __slots__ = ("base", "size", "kind", "target", "name", "end")

    def __init__(self, base, size, kind, target, name):
        self.base = base
        self.size = size
        self.kind = kind
        self.target = target
        self.name = name
        self.end = base + size

    def __repr__(self):
        return f"Region({self.name}, 0x{self.base:08x}, 0x{self.size:x}, {self.kind})"


KINDS = ("ram", "rom", "mmio")


class Bus:
    def __init__(self):
        self.regions = []
        self._pages = {}

    def map_region(self, base, size, kind, target, name=None):
        if kind not in KINDS:
            raise ValueError(f"unknown region kind {kind!r}")
        if size <= 0 or size & (size - 1) or size < (1 << PAGE_SHIFT):
            raise ValueError(f"region size 0x{size:x} must be a power of two >= 0x100")
        if base % size:
            raise ValueError(f"region base 0x{base:08x} not aligned to its size 0x{size:x}")
        if base + size > (1 << 32):
            raise ValueError("region extends past the 32-bit address space")
        new = Region(base, size, kind, target, name or f"{kind}@0x{base:08x}")
        for r in self.regions:
            if base < r.end and r.base < new.end:
                raise OverlapError(new, r)
        self.regions.append(new)
        self.regions.sort(key=lambda r: r.base)
        self._pages.clear()
        return new

    def region_at(self, addr):
        page = addr >> PAGE_SHIFT
        try:
            return self._pages[page]
        except KeyError:
            pass
        hit = None
        for r in self.regions:
            if r.base <= addr < r.end:
                hit = r
                break
        self._pages[page] = hit
        return hit

    def kind_at(self, addr):
        r = self.region_at(addr & M32)
        return None if r is None else r.kind

    def read32(self, addr):
        addr &= M32
        if addr & 3:
            raise BusFault(addr, "misaligned")
        r = self.region_at(addr)
        if r is None:
            raise BusFault(addr)
        return r.target.read32(addr - r.base)

    def write32(self, addr, value):
        addr &= M32
        if addr & 3:
            raise BusFault(addr, "misaligned")
        r = self.region_at(addr)
        if r is None:
            raise BusFault(addr)
        if r.kind == "rom":
            raise BusFault(addr, "write to read-only memory")
        r.target.write32(addr - r.base, value)

    def read(self, addr, width):
        addr &= M32
        if addr & (width - 1):
            raise BusFault(addr, "misaligned")
        r = self.region_at(addr)
        if r is None:
            raise BusFault(addr)
        return r.target.read(addr - r.base, width)

    def write(self, addr, width, value):
        addr &= M32
        if addr & (width - 1):
            raise BusFault(addr, "misaligned")
        r = self.region_at(addr)
        if r is None:
            raise BusFault(addr)
        if r.kind == "rom":
            raise BusFault(addr, "write to read-only memory")
        r.target.write(addr - r.base, width, value)


def format_map(bus, symbols=None):
    """Human-readable table followed by ``key=value`` lines."""
    lines = [f"{'name':<12} {'base':>10} {'end':>10} {'size':>8} kind"]
    for r in bus.regions:
        lines.append(f"{r.name:<12} 0x{r.base:08x} 0x{r.end - 1:08x} {r.size:>8} {r.kind}")
    lines.append("")
    for r in bus.regions:
        lines.append(f"region.{r.name}=0x{r.base:08x},0x{r.size:x},{r.kind}")
    for k, v in (symbols or {}).items():
        lines.append(f"{k}=0x{v:08x}")
    return "\n".join(lines) + "\n"
