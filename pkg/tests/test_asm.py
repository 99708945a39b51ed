import random

import pytest
from hypothesis import given, settings, strategies as st

from qcsoc import isa
from qcsoc.asm import AsmError, assemble, disassemble

from progen import random_program


def word(src):
    return assemble(src).words()[0]


def test_addi_example():
    assert word("addi x1, x0, 5") == 0x00500093


def test_branch_to_label_eight_bytes_ahead():
    w = assemble("beq x1, x2, label\nnop\nlabel: nop").words()[0]
    assert isa.decode([w]).imm == 8


def test_pulse_example():
    words = assemble("pulse 7, 0x08000000, 0x20000000, 0x7FFF, 0, 64, 0").words()
    assert words[0] == (64 << 16) | (0 << 12) | (7 << 7) | 0b0001011
    assert words[1:] == [0x0800_0000, 0x2000_0000, 0x7FFF]


def test_disassemble_examples():
    assert disassemble((0x00500093).to_bytes(4, "little")) == "addi x1, x0, 5\n"
    assert disassemble((0xFFFF_FFFF).to_bytes(4, "little")) == ".word 0xffffffff\n"
    img = assemble("pulse 7, 0x08000000, 0x20000000, 0x7FFF, 0, 64, 0").image
    assert disassemble(img).startswith("pulse 7, ")


def test_mmio_macros_expand():
    u = assemble("li t0, SG_PHASE_ADDR(7)\nli t1, RD_RES_ADDR(7)\nli t2, MULTIPLEX_REG_ADDR(7)")
    regs = {}
    for ins in (isa.decode(u.words()[i:i + 1]) for i in range(len(u.words()))):
        if ins.op == "lui":
            regs[ins.rd] = ins.imm
        elif ins.op == "addi":
            regs[ins.rd] = (regs.get(ins.rs1, 0) + ins.imm) & 0xFFFF_FFFF
    assert regs[5] == 0x4000_0708 and regs[6] == 0x4100_0710 and regs[7] == 0x4100_0714
    assert [r[0] for r in u.mmio_refs] == ["SG_PHASE_ADDR", "RD_RES_ADDR", "MULTIPLEX_REG_ADDR"]


def test_directives_and_symbols():
    u = assemble(".equ N, 3\n.org 0x10\nstart: .word N, N + 1\n.align 4\nend: .space 8", origin=0)
    assert u.symbols["start"] == 0x10 and u.symbols["N"] == 3
    assert u.symbols["end"] == 0x20
    assert u.words()[4:6] == [3, 4]
    assert len(u.image) == 0x28
    assert "start 0x00000010" in u.symbol_table()


@pytest.mark.parametrize("src,needle", [
    ("frob x1, x2", "unknown mnemonic"),
    ("addi x1, x0, 5000", "out of range"),
    ("a: nop\na: nop", "duplicate label"),
    ("j nowhere", "undefined"),
    ("lw x1, 0(x99)", "register"),
    ("addi x1, x0", "operand"),
])
def test_diagnostics_name_the_line(src, needle):
    with pytest.raises(AsmError) as e:
        assemble(src)
    text = str(e.value)
    assert needle in text
    assert e.value.diagnostics[0][0] >= 1


def test_diagnostics_collect_several_lines():
    with pytest.raises(AsmError) as e:
        assemble("frob\nnop\nblah x1")
    assert [ln for ln, _ in e.value.diagnostics] == [1, 3]


def test_li_sizes():
    assert len(assemble("li a0, 5").image) == 4
    assert len(assemble("li a0, 0x12345678").image) == 8
    u = assemble("li a0, -1\nli a1, 0x80000000\nli a2, 0xFFFFF800\nli a3, fwd\nfwd:")
    assert len(u.image) == 4 + 4 + 4 + 8       # forward references keep the long form
    from test_core import bare
    core, *_ = bare(u.image + assemble("ecall").image)
    core.run()
    assert core.regs[10:14] == [0xFFFF_FFFF, 0x8000_0000, 0xFFFF_F800, 20]


def test_pseudo_instructions():
    u = assemble("x: mv a0, a1\nnot a2, a3\nneg a4, a5\nret\nbgt a0, a1, x\nseqz a0, a1\ncall x")
    ops = [l.split()[0] for l in disassemble(u.image).splitlines()]
    assert ops == ["addi", "xori", "sub", "jalr", "blt", "sltiu", "jal"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_random_streams(seed):
    words = random_program(random.Random(seed), 120)
    img = b"".join(w.to_bytes(4, "little") for w in words)
    text = disassemble(img)
    assert assemble(text).image == img
    assert assemble(disassemble(assemble(text).image)).image == img


@given(st.integers(0, 0xFFFF_FFFF))
def test_round_trip_arbitrary_words(w):
    img = w.to_bytes(4, "little")
    assert assemble(disassemble(img)).image == img


def test_round_trip_with_origin():
    u = assemble("loop: addi a0, a0, 1\n bne a0, a1, loop\n ecall", origin=0x400)
    text = disassemble(u.image, origin=0x400)
    assert text.startswith(".org 0x400\n")
    assert assemble(text, origin=0x400).image == u.image


def test_builtin_sources_round_trip():
    from qcsoc import programs
    for name in programs.BUILTINS:
        img = programs.builtin(name).assemble().image
        assert assemble(disassemble(img)).image == img, name
