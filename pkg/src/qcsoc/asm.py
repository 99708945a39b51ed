"""Two-pass assembler and disassembler for RV32I/M plus pulse/settime.

Grammar, one statement per line (``#``, ``;`` or ``//`` start comments)::

    label:                      labels may share a line with a statement
    addi x1, x0, 5              registers as x0..x31 or ABI names
    lw t0, RD_RES_ADDR(7)(zero) offset(base) addressing; offset is an expression
    beq t0, t1, target          branch/jump targets are absolute expressions
    pulse id, freq, phase, amp, env_start, duration[, flags]
    settime rs1
    .equ NAME, expr   .word e[, e...]   .org addr   .align n   .space n

Expressions are integer Python syntax over numbers, symbols and the
address macros from :mod:`qcsoc.bus` (``SG_PHASE_ADDR(7)`` etc.).
Pseudo-instructions: nop, li, la, mv, not, neg, j, jr, ret, call,
beqz, bnez, blez, bgez, bltz, bgtz, bgt, ble, bgtu, bleu, seqz, snez.
"""

import ast
import operator
import re
from dataclasses import dataclass, field

from . import isa
from .bus import address_constants, address_macros
from .isa import Instr, PulseFields

M32 = 0xFFFF_FFFF

REGS = {f"x{i}": i for i in range(32)}
REGS.update({n: i for i, n in enumerate(isa.ABI_NAMES)})
REGS["fp"] = 8


class AsmError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__("\n".join(f"line {ln}: {msg}" for ln, msg in diagnostics))


class _LineError(Exception):
    pass


class _Undefined(Exception):
    pass


@dataclass
class AssemblyUnit:
    source: str
    origin: int
    image: bytes
    symbols: dict
    mmio_refs: list = field(default_factory=list)

    def symbol_table(self):
        """``name address`` lines for labels and constants."""
        return "".join(f"{k} 0x{v & M32:08x}\n" for k, v in sorted(self.symbols.items()))

    def words(self):
        return [int.from_bytes(self.image[i:i + 4], "little") for i in range(0, len(self.image), 4)]


_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.FloorDiv: operator.floordiv, ast.Div: operator.floordiv, ast.Mod: operator.mod,
    ast.LShift: operator.lshift, ast.RShift: operator.rshift, ast.BitOr: operator.or_,
    ast.BitAnd: operator.and_, ast.BitXor: operator.xor,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos, ast.Invert: operator.inv}


class _Evaluator:
    def __init__(self, symbols, macros, refs=None):
        self.symbols = symbols
        self.macros = macros
        self.refs = refs

    def __call__(self, text):
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError:
            raise _LineError(f"bad expression {text.strip()!r}") from None
        return self._eval(tree.body)

    def _eval(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in self.symbols:
                v = self.symbols[node.id]
                if self.refs is not None and node.id.endswith("_ADDR"):
                    self.refs.append((node.id, (), v))
                return v
            raise _Undefined(node.id)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            a, b = self._eval(node.left), self._eval(node.right)
            if isinstance(node.op, (ast.FloorDiv, ast.Div, ast.Mod)) and b == 0:
                raise _LineError("division by zero in expression")
            return _BINOPS[type(node.op)](a, b)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](self._eval(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            fn = self.macros.get(node.func.id)
            if fn is None:
                raise _LineError(f"unknown macro {node.func.id}")
            args = [self._eval(a) for a in node.args]
            try:
                v = fn(*args)
            except TypeError:
                raise _LineError(f"wrong arguments to {node.func.id}") from None
            if self.refs is not None:
                self.refs.append((node.func.id, tuple(args), v))
            return v
        raise _LineError("unsupported expression syntax")


def _split_operands(s):
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


_COMMENT = re.compile(r"(#|;|//).*$")
_LABEL = re.compile(r"^\s*([A-Za-z_]\w*)\s*:")


def _reg(tok):
    r = REGS.get(tok.strip().lower())
    if r is None:
        raise _LineError(f"unknown register {tok.strip()!r}")
    return r


def _mem_operand(tok):
    """Split ``expr(reg)`` at the last parenthesised group."""
    tok = tok.strip()
    if not tok.endswith(")"):
        raise _LineError(f"expected offset(register), got {tok!r}")
    depth = 0
    for i in range(len(tok) - 1, -1, -1):
        if tok[i] == ")":
            depth += 1
        elif tok[i] == "(":
            depth -= 1
            if depth == 0:
                return tok[:i].strip() or "0", _reg(tok[i + 1:-1])
    raise _LineError(f"unbalanced parentheses in {tok!r}")


def _check_range(v, lo, hi, what):
    if not lo <= v <= hi:
        raise _LineError(f"{what} {v} out of range [{lo}, {hi}]")
    return v


def _fits12(v):
    return -2048 <= v <= 2047


def _li_short(v):
    """True when ``li`` of the 32-bit value ``v`` needs a single instruction."""
    sv = ((v & M32) ^ 0x8000_0000) - 0x8000_0000
    return _fits12(sv) or (v & 0xFFF) == 0


def _hi_lo(v):
    v &= M32
    lo = ((v & 0xFFF) ^ 0x800) - 0x800
    hi = ((v - lo) >> 12) & 0xFFFFF
    return hi, lo


_BRANCH_PSEUDO = {
    "beqz": ("beq", False), "bnez": ("bne", False), "bgez": ("bge", False),
    "bltz": ("blt", False), "blez": ("bge", True), "bgtz": ("blt", True),
}
_SWAP_PSEUDO = {"bgt": "blt", "ble": "bge", "bgtu": "bltu", "bleu": "bgeu"}


class Assembler:
    def __init__(self, extra_symbols=None):
        self.base_symbols = dict(address_constants())
        if extra_symbols:
            self.base_symbols.update(extra_symbols)
        self.macros = address_macros()

    def assemble(self, text, origin=0):
        lines = text.splitlines()
        parsed = []
        diags = []
        for ln, raw in enumerate(lines, 1):
            line = _COMMENT.sub("", raw).strip()
            labels = []
            while True:
                m = _LABEL.match(line)
                if not m:
                    break
                labels.append(m.group(1))
                line = line[m.end():].strip()
            parts = line.split(None, 1)
            mnem = parts[0].lower() if parts else ""
            rest = parts[1].strip() if len(parts) > 1 else ""
            parsed.append((ln, labels, mnem, _split_operands(rest) if rest else []))

        # pass 1: addresses and sizes
        symbols = dict(self.base_symbols)
        defined_here = set()
        sizes = {}
        pc = origin
        for ln, labels, mnem, ops in parsed:
            for lab in labels:
                if lab in defined_here:
                    diags.append((ln, f"duplicate label {lab!r}"))
                defined_here.add(lab)
                symbols[lab] = pc
            if not mnem:
                continue
            try:
                if mnem == ".equ" or mnem == ".set":
                    if len(ops) != 2:
                        raise _LineError(".equ takes NAME, expr")
                    name = ops[0]
                    if name in defined_here:
                        raise _LineError(f"duplicate symbol {name!r}")
                    defined_here.add(name)
                    try:
                        symbols[name] = _Evaluator(symbols, self.macros)(ops[1])
                    except _Undefined as u:
                        raise _LineError(f".equ uses undefined symbol {u}") from None
                    continue
                if mnem == ".org":
                    new = _Evaluator(symbols, self.macros)(ops[0])
                    if new < pc:
                        raise _LineError(".org moves backwards")
                    pc = new
                    continue
                size = self._size(mnem, ops, symbols, pc)
                sizes[ln] = size
                pc += size
            except _LineError as e:
                diags.append((ln, str(e)))
            except _Undefined as u:
                diags.append((ln, f"undefined symbol {u}"))
        if diags:
            raise AsmError(diags)

        # pass 2: encode
        out = {}
        refs = []
        ev = _Evaluator(symbols, self.macros, refs)
        pc = origin
        for ln, labels, mnem, ops in parsed:
            if not mnem or mnem in (".equ", ".set"):
                continue
            try:
                if mnem == ".org":
                    pc = ev(ops[0])
                    continue
                words = self._encode(mnem, ops, ev, pc, sizes[ln])
                if len(words) * 4 != sizes[ln] and mnem not in (".space", ".align"):
                    raise _LineError("internal size mismatch")  # pragma: no cover
                for i, w in enumerate(words):
                    out[pc + 4 * i] = w & M32
                pc += sizes[ln]
            except _LineError as e:
                diags.append((ln, str(e)))
            except _Undefined as u:
                diags.append((ln, f"undefined label {u}"))
        if diags:
            raise AsmError(diags)
        end = max([a + 4 for a in out] + [pc, origin])
        image = bytearray(end - origin)
        for a, w in out.items():
            image[a - origin:a - origin + 4] = w.to_bytes(4, "little")
        user_syms = {k: v for k, v in symbols.items() if k in defined_here}
        return AssemblyUnit(text, origin, bytes(image), user_syms, refs)

    # -- sizing --------------------------------------------------------------

    def _size(self, mnem, ops, symbols, pc):
        if mnem == ".word":
            return 4 * len(ops)
        if mnem == ".space":
            n = _Evaluator(symbols, self.macros)(ops[0])
            if n < 0 or n % 4:
                raise _LineError(".space needs a non-negative multiple of 4")
            return n
        if mnem == ".align":
            n = 1 << _Evaluator(symbols, self.macros)(ops[0])
            return (-pc) % n
        if mnem == "pulse":
            return 16
        if mnem == "la":
            return 8
        if mnem == "li":
            if len(ops) != 2:
                raise _LineError("li takes rd, imm")
            try:
                v = _Evaluator(symbols, self.macros)(ops[1])
            except _Undefined:
                return 8
            return 4 if _li_short(v) else 8
        if mnem.startswith("."):
            raise _LineError(f"unknown directive {mnem}")
        if mnem not in _ALL_MNEMONICS:
            raise _LineError(f"unknown mnemonic {mnem!r}")
        return 4

    # -- encoding --------------------------------------------------------------

    def _encode(self, m, ops, ev, pc, size):
        def need(n):
            if len(ops) != n:
                raise _LineError(f"{m} takes {n} operands, got {len(ops)}")

        if m == ".word":
            out = []
            for o in ops:
                v = ev(o)
                _check_range(v, -(1 << 31), M32, ".word value")
                out.append(v & M32)
            return out
        if m in (".space", ".align"):
            return [0] * (size // 4) if size % 4 == 0 else []
        if m in isa.R_OPS or m in isa.M_OPS:
            need(3)
            return [isa.enc_r(m, _reg(ops[0]), _reg(ops[1]), _reg(ops[2]))]
        if m in isa.I_OPS:
            need(3)
            imm = _check_range(ev(ops[2]), -2048, 2047, "immediate")
            return [isa.enc_i(isa.OP_IMM, isa.I_OPS[m], _reg(ops[0]), _reg(ops[1]), imm)]
        if m in isa.SHIFT_OPS:
            need(3)
            sh = _check_range(ev(ops[2]), 0, 31, "shift amount")
            return [isa.enc_shift(m, _reg(ops[0]), _reg(ops[1]), sh)]
        if m in isa.LOAD_OPS or m == "jalr":
            if m == "jalr" and len(ops) == 1:
                return [isa.enc_i(isa.OP_JALR, 0, 1, _reg(ops[0]), 0)]
            need(2)
            off, base = _mem_operand(ops[1])
            imm = _check_range(ev(off), -2048, 2047, "offset")
            opc = isa.OP_JALR if m == "jalr" else isa.OP_LOAD
            f3 = 0 if m == "jalr" else isa.LOAD_OPS[m]
            return [isa.enc_i(opc, f3, _reg(ops[0]), base, imm)]
        if m in isa.STORE_OPS:
            need(2)
            off, base = _mem_operand(ops[1])
            imm = _check_range(ev(off), -2048, 2047, "offset")
            return [isa.enc_s(isa.STORE_OPS[m], base, _reg(ops[0]), imm)]
        if m in isa.BRANCH_OPS:
            need(3)
            return [self._branch(m, _reg(ops[0]), _reg(ops[1]), ev(ops[2]), pc)]
        if m in _BRANCH_PSEUDO:
            need(2)
            real, swap = _BRANCH_PSEUDO[m]
            r = _reg(ops[0])
            a, b = (0, r) if swap else (r, 0)
            return [self._branch(real, a, b, ev(ops[1]), pc)]
        if m in _SWAP_PSEUDO:
            need(3)
            return [self._branch(_SWAP_PSEUDO[m], _reg(ops[1]), _reg(ops[0]), ev(ops[2]), pc)]
        if m in ("lui", "auipc"):
            need(2)
            v = _check_range(ev(ops[1]), -(1 << 19), 0xFFFFF, "upper immediate")
            return [isa.enc_u(isa.OP_LUI if m == "lui" else isa.OP_AUIPC, _reg(ops[0]), v)]
        if m == "jal":
            if len(ops) == 1:
                return [self._jal(1, ev(ops[0]), pc)]
            need(2)
            return [self._jal(_reg(ops[0]), ev(ops[1]), pc)]
        if m in ("j", "call"):
            need(1)
            return [self._jal(0 if m == "j" else 1, ev(ops[0]), pc)]
        if m == "jr":
            need(1)
            return [isa.enc_i(isa.OP_JALR, 0, 0, _reg(ops[0]), 0)]
        if m == "ret":
            need(0)
            return [isa.enc_i(isa.OP_JALR, 0, 0, 1, 0)]
        if m == "nop":
            need(0)
            return [isa.enc_i(isa.OP_IMM, 0, 0, 0, 0)]
        if m == "mv":
            need(2)
            return [isa.enc_i(isa.OP_IMM, 0, _reg(ops[0]), _reg(ops[1]), 0)]
        if m == "not":
            need(2)
            return [isa.enc_i(isa.OP_IMM, 4, _reg(ops[0]), _reg(ops[1]), -1)]
        if m == "neg":
            need(2)
            return [isa.enc_r("sub", _reg(ops[0]), 0, _reg(ops[1]))]
        if m == "seqz":
            need(2)
            return [isa.enc_i(isa.OP_IMM, 3, _reg(ops[0]), _reg(ops[1]), 1)]
        if m == "snez":
            need(2)
            return [isa.enc_r("sltu", _reg(ops[0]), 0, _reg(ops[1]))]
        if m == "li":
            need(2)
            rd = _reg(ops[0])
            v = _check_range(ev(ops[1]), -(1 << 31), M32, "li value")
            hi, lo = _hi_lo(v)
            if size == 4:
                if lo == 0 and hi:
                    return [isa.enc_u(isa.OP_LUI, rd, hi)]
                return [isa.enc_i(isa.OP_IMM, 0, rd, 0, lo)]
            return [isa.enc_u(isa.OP_LUI, rd, hi), isa.enc_i(isa.OP_IMM, 0, rd, rd, lo)]
        if m == "la":
            need(2)
            rd = _reg(ops[0])
            hi, lo = _hi_lo(ev(ops[1]))
            return [isa.enc_u(isa.OP_LUI, rd, hi), isa.enc_i(isa.OP_IMM, 0, rd, rd, lo)]
        if m == "ecall":
            need(0)
            return [0x0000_0073]
        if m == "ebreak":
            need(0)
            return [0x0010_0073]
        if m == "fence":
            return [isa.OP_FENCE]
        if m == "settime":
            need(1)
            return [isa.enc_settime(_reg(ops[0]))]
        if m == "pulse":
            if len(ops) not in (6, 7):
                raise _LineError("pulse takes id, freq, phase, amp, env_start, duration[, flags]")
            vals = [ev(o) for o in ops] + ([0] if len(ops) == 6 else [])
            pid, freq, phase, amp, env, dur, flags = vals
            _check_range(pid, 0, 31, "pulse id")
            _check_range(freq, -(1 << 31), M32, "frequency word")
            _check_range(phase, -(1 << 31), M32, "phase word")
            _check_range(amp, -32768, 0xFFFF, "amplitude")
            _check_range(env, 0, 0xFFFF, "envelope start")
            _check_range(dur, 0, 0xFFFF, "duration")
            _check_range(flags, 0, 15, "flags")
            amp = amp - 0x10000 if amp >= 0x8000 else amp
            return isa.enc_pulse(PulseFields(pid, flags, dur, freq & M32, phase & M32, amp, env))
        raise _LineError(f"unknown mnemonic {m!r}")  # pragma: no cover

    def _branch(self, m, rs1, rs2, target, pc):
        off = target - pc
        if off % 2:
            raise _LineError("branch target not 2-byte aligned")
        _check_range(off, -4096, 4094, "branch offset")
        return isa.enc_b(isa.BRANCH_OPS[m], rs1, rs2, off)

    def _jal(self, rd, target, pc):
        off = target - pc
        if off % 2:
            raise _LineError("jump target not 2-byte aligned")
        _check_range(off, -(1 << 20), (1 << 20) - 2, "jump offset")
        return isa.enc_j(rd, off)


_ALL_MNEMONICS = (set(isa.R_OPS) | set(isa.M_OPS) | set(isa.I_OPS) | set(isa.SHIFT_OPS)
                  | set(isa.LOAD_OPS) | set(isa.STORE_OPS) | set(isa.BRANCH_OPS)
                  | set(_BRANCH_PSEUDO) | set(_SWAP_PSEUDO)
                  | {"lui", "auipc", "jal", "jalr", "j", "call", "jr", "ret", "nop", "mv",
                     "not", "neg", "seqz", "snez", "ecall", "ebreak", "fence", "settime"})


def assemble(text, origin=0, symbols=None) -> AssemblyUnit:
    return Assembler(symbols).assemble(text, origin)


def disassemble(image: bytes, origin=0) -> str:
    """Canonical text; words that do not round-trip print as ``.word``."""
    if len(image) % 4:
        raise ValueError("image length must be a multiple of 4")
    words = [int.from_bytes(image[i:i + 4], "little") for i in range(0, len(image), 4)]
    lines = [f".org 0x{origin:x}"] if origin else []
    i = 0
    while i < len(words):
        pc = origin + 4 * i
        try:
            ins = isa.decode(words[i:i + 4], pc)
            n = ins.size // 4
            if isa.encode(ins) != words[i:i + n]:
                raise isa.IllegalInstruction(pc, words[i])
            lines.append(isa.format_instr(ins, pc))
            i += n
        except isa.IllegalInstruction:
            lines.append(f".word 0x{words[i]:08x}")
            i += 1
    return "\n".join(lines) + "\n"


def decode_instr(word) -> Instr:
    return isa.decode([word])
