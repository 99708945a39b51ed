"""RV32I/M instruction encodings plus the custom pulse and settime words.

``decode`` is pure and shared by the core, the disassembler and the tests.
The pulse instruction is four words:

    word0  [6:0] opcode 0b0001011  [11:7] id  [15:12] flags  [31:16] duration
    word1  frequency word
    word2  phase word
    word3  [15:0] amplitude (Q1.15)  [31:16] envelope start index
"""

from typing import NamedTuple, Optional

OP_LOAD = 0x03
OP_FENCE = 0x0F
OP_IMM = 0x13
OP_AUIPC = 0x17
OP_STORE = 0x23
OP_REG = 0x33
OP_LUI = 0x37
OP_BRANCH = 0x63
OP_JALR = 0x67
OP_JAL = 0x6F
OP_SYSTEM = 0x73
OP_PULSE = 0x0B     # custom-0
OP_SETTIME = 0x2B   # custom-1

ABI_NAMES = ["zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1",
             "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3",
             "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
             "t5", "t6"]

R_OPS = {
    "add": (0, 0x00), "sub": (0, 0x20), "sll": (1, 0x00), "slt": (2, 0x00),
    "sltu": (3, 0x00), "xor": (4, 0x00), "srl": (5, 0x00), "sra": (5, 0x20),
    "or": (6, 0x00), "and": (7, 0x00),
}
M_OPS = {
    "mul": (0, 0x01), "mulh": (1, 0x01), "mulhsu": (2, 0x01), "mulhu": (3, 0x01),
    "div": (4, 0x01), "divu": (5, 0x01), "rem": (6, 0x01), "remu": (7, 0x01),
}
I_OPS = {"addi": 0, "slti": 2, "sltiu": 3, "xori": 4, "ori": 6, "andi": 7}
SHIFT_OPS = {"slli": (1, 0x00), "srli": (5, 0x00), "srai": (5, 0x20)}
LOAD_OPS = {"lb": 0, "lh": 1, "lw": 2, "lbu": 4, "lhu": 5}
STORE_OPS = {"sb": 0, "sh": 1, "sw": 2}
BRANCH_OPS = {"beq": 0, "bne": 1, "blt": 4, "bge": 5, "bltu": 6, "bgeu": 7}

_R_BY_CODE = {v: k for k, v in {**R_OPS, **M_OPS}.items()}
_I_BY_F3 = {v: k for k, v in I_OPS.items()}
_SHIFT_BY_CODE = {v: k for k, v in SHIFT_OPS.items()}
_LOAD_BY_F3 = {v: k for k, v in LOAD_OPS.items()}
_STORE_BY_F3 = {v: k for k, v in STORE_OPS.items()}
_BRANCH_BY_F3 = {v: k for k, v in BRANCH_OPS.items()}

M_MNEMONICS = frozenset(M_OPS)


class PulseFields(NamedTuple):
    id: int
    flags: int
    duration: int
    freq: int
    phase: int
    amp: int        # signed Q1.15
    env_start: int


class Instr(NamedTuple):
    op: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    size: int = 4
    pulse: Optional[PulseFields] = None


class IllegalInstruction(Exception):
    def __init__(self, pc, word):
        super().__init__(f"illegal instruction 0x{word:08x} at pc 0x{pc:08x}")
        self.pc = pc
        self.word = word


def _sext(v, bits):
    m = 1 << (bits - 1)
    return ((v & ((1 << bits) - 1)) ^ m) - m


def imm_i(w):
    return _sext(w >> 20, 12)


def imm_s(w):
    return _sext(((w >> 25) << 5) | ((w >> 7) & 0x1F), 12)


def imm_b(w):
    v = (((w >> 31) & 1) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5) | (((w >> 8) & 0xF) << 1)
    return _sext(v, 13)


def imm_j(w):
    v = (((w >> 31) & 1) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11) | (((w >> 21) & 0x3FF) << 1)
    return _sext(v, 21)


def decode(words, pc: int = 0) -> Instr:
    """Decode the instruction whose first word is ``words[0]``.

    ``words`` may be shorter than four entries; a pulse that runs off the end
    is illegal.
    """
    w = words[0] & 0xFFFF_FFFF
    opc = w & 0x7F
    rd = (w >> 7) & 0x1F
    f3 = (w >> 12) & 7
    rs1 = (w >> 15) & 0x1F
    rs2 = (w >> 20) & 0x1F
    f7 = w >> 25
    if opc == OP_REG:
        op = _R_BY_CODE.get((f3, f7))
        if op is not None:
            return Instr(op, rd, rs1, rs2)
    elif opc == OP_IMM:
        if f3 in (1, 5):
            op = _SHIFT_BY_CODE.get((f3, f7))
            if op is not None:
                return Instr(op, rd, rs1, 0, rs2)
        else:
            return Instr(_I_BY_F3[f3], rd, rs1, 0, imm_i(w))
    elif opc == OP_LOAD:
        op = _LOAD_BY_F3.get(f3)
        if op is not None:
            return Instr(op, rd, rs1, 0, imm_i(w))
    elif opc == OP_STORE:
        op = _STORE_BY_F3.get(f3)
        if op is not None:
            return Instr(op, 0, rs1, rs2, imm_s(w))
    elif opc == OP_BRANCH:
        op = _BRANCH_BY_F3.get(f3)
        if op is not None:
            return Instr(op, 0, rs1, rs2, imm_b(w))
    elif opc == OP_LUI:
        return Instr("lui", rd, 0, 0, w & 0xFFFF_F000)
    elif opc == OP_AUIPC:
        return Instr("auipc", rd, 0, 0, w & 0xFFFF_F000)
    elif opc == OP_JAL:
        return Instr("jal", rd, 0, 0, imm_j(w))
    elif opc == OP_JALR:
        if f3 == 0:
            return Instr("jalr", rd, rs1, 0, imm_i(w))
    elif opc == OP_FENCE:
        if f3 == 0:
            return Instr("fence")
    elif opc == OP_SYSTEM:
        if w == 0x0000_0073:
            return Instr("ecall")
        if w == 0x0010_0073:
            return Instr("ebreak")
    elif opc == OP_SETTIME:
        if f3 == 0 and rd == 0 and rs2 == 0 and f7 == 0:
            return Instr("settime", 0, rs1)
    elif opc == OP_PULSE:
        if len(words) >= 4:
            w3 = words[3] & 0xFFFF_FFFF
            amp = w3 & 0xFFFF
            p = PulseFields(rd, (w >> 12) & 0xF, w >> 16,
                            words[1] & 0xFFFF_FFFF, words[2] & 0xFFFF_FFFF,
                            amp - 0x10000 if amp & 0x8000 else amp, w3 >> 16)
            return Instr("pulse", size=16, pulse=p)
    raise IllegalInstruction(pc, w)


# -- encoders -----------------------------------------------------------------

def enc_r(op, rd, rs1, rs2):
    f3, f7 = R_OPS.get(op) or M_OPS[op]
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | OP_REG


def enc_i(opcode, f3, rd, rs1, imm):
    return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode


def enc_shift(op, rd, rs1, shamt):
    f3, f7 = SHIFT_OPS[op]
    return (f7 << 25) | ((shamt & 0x1F) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | OP_IMM


def enc_s(f3, rs1, rs2, imm):
    imm &= 0xFFF
    return ((imm >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((imm & 0x1F) << 7) | OP_STORE


def enc_b(f3, rs1, rs2, off):
    off &= 0x1FFF
    return ((((off >> 12) & 1) << 31) | (((off >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15)
            | (f3 << 12) | (((off >> 1) & 0xF) << 8) | (((off >> 11) & 1) << 7) | OP_BRANCH)


def enc_u(opcode, rd, imm20):
    return ((imm20 & 0xFFFFF) << 12) | (rd << 7) | opcode


def enc_j(rd, off):
    off &= 0x1FFFFF
    return ((((off >> 20) & 1) << 31) | (((off >> 1) & 0x3FF) << 21) | (((off >> 11) & 1) << 20)
            | (((off >> 12) & 0xFF) << 12) | (rd << 7) | OP_JAL)


def enc_settime(rs1):
    return (rs1 << 15) | OP_SETTIME


def enc_pulse(p: PulseFields):
    if not (0 <= p.id < 32 and 0 <= p.flags < 16 and 0 <= p.duration < 65536
            and 0 <= p.env_start < 65536 and -32768 <= p.amp < 65536):
        raise ValueError("pulse field out of range")
    w0 = (p.duration << 16) | (p.flags << 12) | (p.id << 7) | OP_PULSE
    w3 = (p.env_start << 16) | (p.amp & 0xFFFF)
    return [w0, p.freq & 0xFFFF_FFFF, p.phase & 0xFFFF_FFFF, w3]


def encode(ins: Instr):
    """Inverse of :func:`decode` (list of words)."""
    op = ins.op
    if op in R_OPS or op in M_OPS:
        return [enc_r(op, ins.rd, ins.rs1, ins.rs2)]
    if op in I_OPS:
        return [enc_i(OP_IMM, I_OPS[op], ins.rd, ins.rs1, ins.imm)]
    if op in SHIFT_OPS:
        return [enc_shift(op, ins.rd, ins.rs1, ins.imm)]
    if op in LOAD_OPS:
        return [enc_i(OP_LOAD, LOAD_OPS[op], ins.rd, ins.rs1, ins.imm)]
    if op in STORE_OPS:
        return [enc_s(STORE_OPS[op], ins.rs1, ins.rs2, ins.imm)]
    if op in BRANCH_OPS:
        return [enc_b(BRANCH_OPS[op], ins.rs1, ins.rs2, ins.imm)]
    if op == "lui":
        return [enc_u(OP_LUI, ins.rd, ins.imm >> 12)]
    if op == "auipc":
        return [enc_u(OP_AUIPC, ins.rd, ins.imm >> 12)]
    if op == "jal":
        return [enc_j(ins.rd, ins.imm)]
    if op == "jalr":
        return [enc_i(OP_JALR, 0, ins.rd, ins.rs1, ins.imm)]
    if op == "fence":
        return [OP_FENCE]
    if op == "ecall":
        return [0x73]
    if op == "ebreak":
        return [0x0010_0073]
    if op == "settime":
        return [enc_settime(ins.rs1)]
    if op == "pulse":
        return enc_pulse(ins.pulse)
    raise ValueError(f"cannot encode {op}")


def reg_name(r):
    return f"x{r}"


def format_instr(ins: Instr, pc: int = 0) -> str:
    """Canonical assembler text; branch and jump targets are absolute."""
    op = ins.op
    rd, rs1, rs2, imm = reg_name(ins.rd), reg_name(ins.rs1), reg_name(ins.rs2), ins.imm
    if op in R_OPS or op in M_OPS:
        return f"{op} {rd}, {rs1}, {rs2}"
    if op in I_OPS or op in SHIFT_OPS:
        return f"{op} {rd}, {rs1}, {imm}"
    if op in LOAD_OPS or op == "jalr":
        return f"{op} {rd}, {imm}({rs1})"
    if op in STORE_OPS:
        return f"{op} {rs2}, {imm}({rs1})"
    if op in BRANCH_OPS:
        return f"{op} {rs1}, {rs2}, 0x{(pc + imm) & 0xFFFF_FFFF:x}"
    if op in ("lui", "auipc"):
        return f"{op} {rd}, 0x{imm >> 12:x}"
    if op == "jal":
        return f"jal {rd}, 0x{(pc + imm) & 0xFFFF_FFFF:x}"
    if op == "settime":
        return f"settime {rs1}"
    if op == "pulse":
        p = ins.pulse
        return (f"pulse {p.id}, 0x{p.freq:08x}, 0x{p.phase:08x}, {p.amp}, "
                f"{p.env_start}, {p.duration}, {p.flags}")
    return op
