import pytest
from hypothesis import given, strategies as st

from qcsoc import bus as busmod
from qcsoc.bus import Bus, BusFault, Memory, OverlapError, Registers
from qcsoc.soc import SoC


class _Regs:
    def __init__(self):
        self.store = {}

    def mmio_read(self, off):
        return self.store.get(off, 0)

    def mmio_write(self, off, value):
        self.store[off] = value


def test_map_rejects_overlap_and_misalignment():
    b = Bus()
    b.map_region(0x1000, 0x1000, "ram", Memory(0x1000), "a")
    with pytest.raises(OverlapError):
        b.map_region(0x1000, 0x100, "ram", Memory(0x100), "b")
    with pytest.raises(ValueError):
        b.map_region(0x2080, 0x100, "ram", Memory(0x100))
    with pytest.raises(ValueError):
        b.map_region(0x3000, 0x300, "ram", Memory(0x300))
    with pytest.raises(ValueError):
        b.map_region(0x4000, 0x100, "flash", Memory(0x100))


def test_unmapped_and_misaligned_fault():
    b = Bus()
    b.map_region(0, 0x100, "ram", Memory(0x100))
    with pytest.raises(BusFault):
        b.read32(0x100)
    with pytest.raises(BusFault):
        b.read32(2)
    with pytest.raises(BusFault):
        b.write(1, 2, 0)


def test_rom_rejects_writes():
    b = Bus()
    b.map_region(0, 0x100, "rom", Memory(0x100, readonly=True))
    with pytest.raises(BusFault):
        b.write32(0, 1)
    with pytest.raises(BusFault):
        b.write(0, 1, 1)


@given(st.integers(0, 0xFF // 4), st.integers(0, 0xFFFF_FFFF))
def test_memory_little_endian_subwords(word_idx, v):
    m = Memory(0x100)
    m.write32(4 * word_idx, v)
    for i in range(4):
        assert m.read(4 * word_idx + i, 1) == (v >> (8 * i)) & 0xFF
    assert m.read(4 * word_idx, 2) == v & 0xFFFF
    assert m.read32(4 * word_idx) == v


def test_registers_reject_subword_access():
    r = Registers(_Regs())
    r.write32(4, 0x1_0000_0005)
    assert r.read32(4) == 5
    with pytest.raises(BusFault):
        r.read(4, 2)
    with pytest.raises(BusFault):
        r.write(4, 1, 0)


def test_two_buses_route_identically():
    a, b = SoC().bus, SoC().bus
    for addr in (0, 0x10_0000, 0x2000_0000, 0x2007_0000, 0x3000_0000, 0x4000_0708, 0x4100_0710,
                 0x4200_0004, 0x5000_0000, 0x4000_1000):
        ra, rb = a.region_at(addr), b.region_at(addr)
        assert (ra and ra.name) == (rb and rb.name)


def test_default_address_map():
    soc = SoC()
    names = {r.name: (r.base, r.size, r.kind) for r in soc.bus.regions}
    assert names["prog"] == (0, 0x1_0000, "ram")
    assert names["data"] == (0x10_0000, 0x1_0000, "ram")
    assert names["env0"][0] == 0x2000_0000 and names["env15"][0] == 0x200F_0000
    assert names["rdbuf7"] == (0x3007_0000, 0x8000, "rom")
    assert names["sg7"] == (0x4000_0700, 0x100, "mmio")
    assert names["rd7"] == (0x4100_0700, 0x100, "mmio")
    assert names["sys"] == (0x4200_0000, 0x100, "mmio")


def test_address_macros():
    assert busmod.SG_PHASE_ADDR(7) == 0x4000_0708
    assert busmod.RD_RES_ADDR(7) == 0x4100_0710
    assert busmod.MULTIPLEX_REG_ADDR(7) == 0x4100_0714
    m = busmod.address_macros()
    assert m["SG_T0_ADDR"](3) == 0x4000_0318
    assert m["RD_ARM_ADDR"](0) == 0x4100_002C
    assert m["ENV_ADDR"](2) == 0x2002_0000


def test_format_map_lists_regions_and_symbols():
    soc = SoC()
    text = busmod.format_map(soc.bus, soc.symbols())
    assert "region.prog=0x00000000,0x10000,ram" in text
    assert "SG_PHASE_ADDR(7)=0x40000708" in text
    assert "RD_RES_ADDR(7)=0x41000710" in text


def test_sys_block_reads_reftime_and_shot():
    soc = SoC()
    soc.reset(shot=42)
    soc.core.cycle = 0x1_0000_0005
    assert soc.bus.read32(busmod.SYS_BASE + busmod.SYS_REFTIME) == 5
    assert soc.bus.read32(busmod.SYS_BASE + busmod.SYS_SHOT) == 42
    soc.bus.write32(busmod.SYS_BASE + busmod.SYS_TREG, 99)
    assert soc.core.treg == 99


def test_sixteen_generators_stride():
    assert busmod.SG_PHASE_ADDR(15) == 0x4000_0F08
    soc = SoC()
    assert soc.bus.region_at(0x4000_0F08).name == "sg15"
    assert soc.bus.region_at(0x2003_0000).target is soc.sgs[3].env


def test_overlap_inside_program_ram():
    soc = SoC()
    with pytest.raises(OverlapError) as e:
        soc.bus.map_region(0x800, 0x100, "ram", Memory(0x100))
    assert e.value.region.name == "prog"


def test_phase_register_write_takes_quarter_turn():
    from qcsoc.fixedpoint import phase_pi
    soc = SoC()
    soc.bus.write32(busmod.SG_PHASE_ADDR(7), phase_pi(0.5))
    assert soc.sgs[7].regs["phase"] == 0x4000_0000


def test_result_reads_zero_before_measurement_and_rejects_writes():
    soc = SoC()
    assert soc.bus.read32(busmod.RD_RES_ADDR(7)) == 0
    soc.bus.write32(busmod.RD_RES_ADDR(7), 1)
    assert soc.bus.read32(busmod.RD_RES_ADDR(7)) == 0
    assert soc.bus.read32(busmod.rd_addr(7, busmod.RD_ERRFLAGS)) & 0x01


def test_unmapped_write_faults():
    with pytest.raises(BusFault):
        SoC().bus.write32(0x7000_0000, 1)


_SOC = SoC()


@given(st.lists(st.tuples(st.integers(0, 0xFFFF // 4), st.integers(0, 0xFFFF_FFFF),
                          st.sampled_from(["data", "env0", "prog"])), max_size=60))
def test_ram_read_after_write(ops):
    soc = _SOC
    base = {"data": busmod.DATA_BASE, "env0": busmod.ENV_BASE, "prog": 0}
    shadow = {}
    for idx, v, region in ops:
        a = base[region] + 4 * (idx % (0x2000 // 4))
        soc.bus.write32(a, v)
        shadow[a] = v
    for a, v in shadow.items():
        assert soc.bus.read32(a) == v
