"""Two-pass assembler, program container and control flow graph builder.

Line grammar:

    line      := [label ":"] [guard] [mnemonic [operands]] [";" comment]
    guard     := "@" ["!"] "P" digit
    operand   := ["!"] "P" digit | "R" num | "B" digit | "#" int | identifier
    directive := ".warpsize" n | ".warps" n | ".mem" n

Identifiers in operand position are label references, except the special
register names accepted by S2R.  The optional predicate written as the
first operand of BRA, BREAK and EXIT is folded into the instruction
guard, so `@P0 BRA !P1, L` executes the jump in lanes where P0 and not P1.
A label on a line of its own binds to the next instruction.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .isa import (
    GUARDLESS_OPCODES,
    ISETP_CMPS,
    LEAD_PRED_OPCODES,
    OPERAND_SIGNATURES,
    WARP_SIZE_MAX,
    WARP_SIZE_MIN,
    Guard,
    Imm,
    Instruction,
    Label,
    Opcode,
    Operand,
    PredRef,
    RegB,
    RegP,
    RegR,
    SPECIAL_REGS,
    SReg,
)

__all__ = [
    "AsmError",
    "Program",
    "assemble",
    "assemble_file",
    "pretty_print",
    "EXIT_NODE",
    "Cfg",
    "build_cfg",
]

PROGRAM_JSON_VERSION = 1

DEFAULT_WARP_SIZE = 4
DEFAULT_NUM_WARPS = 1
DEFAULT_MEM_WORDS = 0


class AsmError(Exception):
    """Assembly failure with a 1-based source line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass
class Program:
    """An assembled program plus its launch directives."""

    instructions: tuple[Instruction, ...]
    labels: dict[str, int] = field(default_factory=dict)
    warp_size: int = DEFAULT_WARP_SIZE
    num_warps: int = DEFAULT_NUM_WARPS
    mem_words: int = DEFAULT_MEM_WORDS
    source_name: str = ""
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.instructions)

    # serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "version": PROGRAM_JSON_VERSION,
            "warp_size": self.warp_size,
            "num_warps": self.num_warps,
            "mem_words": self.mem_words,
            "labels": self.labels,
            "instructions": [_inst_to_dict(i) for i in self.instructions],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, source_name: str = "") -> "Program":
        doc = json.loads(text)
        version = doc.get("version")
        if version != PROGRAM_JSON_VERSION:
            raise ValueError(f"unsupported program version {version!r}")
        insts = tuple(_inst_from_dict(d, pc)
                      for pc, d in enumerate(doc["instructions"]))
        return cls(
            instructions=insts,
            labels=dict(doc.get("labels", {})),
            warp_size=doc["warp_size"],
            num_warps=doc["num_warps"],
            mem_words=doc["mem_words"],
            source_name=source_name,
        )


def _inst_to_dict(inst: Instruction) -> dict:
    def pred(ref: PredRef | None):
        return None if ref is None else [ref.index, ref.negated]

    ops = []
    for op in inst.operands:
        if isinstance(op, RegR):
            ops.append({"k": "R", "i": op.index})
        elif isinstance(op, RegP):
            ops.append({"k": "P", "i": op.index})
        elif isinstance(op, RegB):
            ops.append({"k": "B", "i": op.index})
        elif isinstance(op, Imm):
            ops.append({"k": "imm", "v": op.value})
        elif isinstance(op, Label):
            ops.append({"k": "label", "pc": op.pc, "name": op.name})
        elif isinstance(op, SReg):
            ops.append({"k": "sreg", "name": op.name})
        else:       # pragma: no cover - exhaustive over Operand
            raise TypeError(f"unknown operand {op!r}")
    d = {"op": inst.opcode.value, "guard": [pred(inst.guard.lead),
                                            pred(inst.guard.extra)],
         "operands": ops}
    if inst.cmp is not None:
        d["cmp"] = inst.cmp
    return d


def _inst_from_dict(d: dict, pc: int) -> Instruction:
    def pred(spec):
        return None if spec is None else PredRef(spec[0], spec[1])

    ops: list[Operand] = []
    for o in d["operands"]:
        kind = o["k"]
        if kind == "R":
            ops.append(RegR(o["i"]))
        elif kind == "P":
            ops.append(RegP(o["i"]))
        elif kind == "B":
            ops.append(RegB(o["i"]))
        elif kind == "imm":
            ops.append(Imm(o["v"]))
        elif kind == "label":
            ops.append(Label(o["pc"], o.get("name", "")))
        elif kind == "sreg":
            ops.append(SReg(o["name"]))
        else:
            raise ValueError(f"unknown operand kind {kind!r}")
    lead, extra = d["guard"]
    return Instruction(
        opcode=Opcode(d["op"]),
        guard=Guard(pred(lead), pred(extra)),
        operands=tuple(ops),
        pc=pc,
        cmp=d.get("cmp"),
    )


# ── parsing ─────────────────────────────────────────────────────────────

_LABEL_DEF = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_$.]*)\s*:\s*")
_GUARD = re.compile(r"^@(!?)P(\d+)\s+")
_MNEMONIC = re.compile(r"^([A-Za-z][A-Za-z0-9_.]*)\s*")
_PRED_TOK = re.compile(r"^(!?)P(\d+)$")
_RREG_TOK = re.compile(r"^R(\d+)$")
_BREG_TOK = re.compile(r"^B(\d+)$")
_IMM_TOK = re.compile(r"^#(.+)$")
_IDENT_TOK = re.compile(r"^[A-Za-z_][A-Za-z0-9_$.]*$")

_KIND_NAMES = {
    RegR: "an R register",
    RegP: "a predicate register",
    RegB: "a B register",
    Imm: "an immediate",
    Label: "a label",
    SReg: "a special register",
}


@dataclass
class _RawInst:
    line: int
    guard_lead: PredRef | None
    mnemonic: str
    operand_texts: list[str]


def assemble(text: str, source_name: str = "") -> Program:
    """Assemble source text or raise AsmError on the first problem."""
    directives: dict[str, int] = {}
    labels: dict[str, int] = {}
    raw: list[_RawInst] = []

    for line_no, full_line in enumerate(text.splitlines(), start=1):
        line = full_line.split(";", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("."):
            _parse_directive(stripped, line_no, directives)
            continue

        m = _LABEL_DEF.match(line)
        if m:
            name = m.group(1)
            if name in labels:
                raise AsmError(line_no, f"duplicate label {name!r}")
            labels[name] = len(raw)
            line = line[m.end():]
            if _LABEL_DEF.match(line):
                raise AsmError(line_no, "only one label per line")
        if not line.strip():
            continue        # label on its own line
        raw.append(_parse_statement(line.strip(), line_no))

    insts = tuple(_resolve(r, pc, labels) for pc, r in enumerate(raw))

    program = Program(
        instructions=insts,
        labels=labels,
        warp_size=directives.get("warpsize", DEFAULT_WARP_SIZE),
        num_warps=directives.get("warps", DEFAULT_NUM_WARPS),
        mem_words=directives.get("mem", DEFAULT_MEM_WORDS),
        source_name=source_name,
    )
    program.warnings = tuple(_lint(program))
    return program


def _parse_directive(stripped: str, line_no: int,
                     directives: dict[str, int]) -> None:
    parts = stripped.split()
    name = parts[0][1:]
    if name not in ("warpsize", "warps", "mem"):
        raise AsmError(line_no, f"unknown directive .{name}")
    if len(parts) != 2:
        raise AsmError(line_no, f".{name} takes exactly one integer")
    try:
        value = int(parts[1], 0)
    except ValueError:
        raise AsmError(line_no, f".{name} takes an integer, "
                                f"got {parts[1]!r}") from None
    if name in directives:
        raise AsmError(line_no, f"duplicate directive .{name}")
    if name == "warpsize" and not WARP_SIZE_MIN <= value <= WARP_SIZE_MAX:
        raise AsmError(line_no, f".warpsize {value} outside "
                                f"{WARP_SIZE_MIN}..{WARP_SIZE_MAX}")
    if name == "warps" and value < 1:
        raise AsmError(line_no, f".warps {value} must be at least 1")
    if name == "mem" and value < 0:
        raise AsmError(line_no, f".mem {value} must not be negative")
    directives[name] = value


def _parse_statement(text: str, line_no: int) -> _RawInst:
    guard_lead = None
    m = _GUARD.match(text)
    if m:
        try:
            guard_lead = PredRef(int(m.group(2)), negated=bool(m.group(1)))
        except ValueError as exc:
            raise AsmError(line_no, str(exc)) from None
        text = text[m.end():]
    m = _MNEMONIC.match(text)
    if not m:
        raise AsmError(line_no, f"expected a mnemonic, got {text!r}")
    mnemonic = m.group(1).upper()
    rest = text[m.end():].strip()
    operand_texts = []
    if rest:
        operand_texts = [t.strip() for t in rest.split(",")]
        for t in operand_texts:
            if not t:
                raise AsmError(line_no, "empty operand")
    return _RawInst(line_no, guard_lead, mnemonic, operand_texts)


def _lookup_opcode(raw: _RawInst) -> tuple[Opcode, str | None]:
    name = raw.mnemonic
    if name.startswith("ISETP"):
        _, _, cmp = name.partition(".")
        if cmp not in ISETP_CMPS:
            raise AsmError(raw.line, f"ISETP needs a comparison suffix, one "
                                     f"of {'/'.join(ISETP_CMPS)}")
        return Opcode.ISETP, cmp
    if name == "BMOV":
        # direction is resolved from the first operand later
        if not raw.operand_texts:
            raise AsmError(raw.line, "BMOV expects 2 operands, got 0")
        if raw.operand_texts[0].upper().startswith("B"):
            return Opcode.BMOV_BR, None
        return Opcode.BMOV_RB, None
    try:
        return Opcode(name), None
    except ValueError:
        raise AsmError(raw.line, f"unknown opcode {name!r}") from None


def _parse_operand(text: str, line_no: int,
                   labels: dict[str, int]) -> tuple[Operand, bool]:
    """Returns (operand, negated).  Negation is legal only on predicates
    that the caller folds into the guard."""
    m = _PRED_TOK.match(text)
    if m:
        try:
            return RegP(int(m.group(2))), bool(m.group(1))
        except ValueError as exc:
            raise AsmError(line_no, str(exc)) from None
    m = _RREG_TOK.match(text)
    if m:
        try:
            return RegR(int(m.group(1))), False
        except ValueError as exc:
            raise AsmError(line_no, str(exc)) from None
    m = _BREG_TOK.match(text)
    if m:
        try:
            return RegB(int(m.group(1))), False
        except ValueError as exc:
            raise AsmError(line_no, str(exc)) from None
    m = _IMM_TOK.match(text)
    if m:
        try:
            value = int(m.group(1), 0)
        except ValueError:
            raise AsmError(line_no,
                           f"bad immediate {text!r}") from None
        if not -(1 << 31) <= value < (1 << 32):
            raise AsmError(line_no, f"immediate {value} does not fit "
                                    f"in 32 bits")
        return Imm(value & 0xFFFFFFFF), False
    if _IDENT_TOK.match(text):
        if text in SPECIAL_REGS:
            return SReg(text), False
        if text not in labels:
            raise AsmError(line_no, f"undefined label {text!r}")
        return Label(labels[text], text), False
    raise AsmError(line_no, f"cannot parse operand {text!r}")


def _resolve(raw: _RawInst, pc: int, labels: dict[str, int]) -> Instruction:
    opcode, cmp = _lookup_opcode(raw)
    parsed = [_parse_operand(t, raw.line, labels)
              for t in raw.operand_texts]

    extra = None
    if parsed and opcode in LEAD_PRED_OPCODES:
        first, negated = parsed[0]
        if isinstance(first, RegP):
            extra = PredRef(first.index, negated)
            parsed = parsed[1:]

    operands = []
    for op, negated in parsed:
        if negated:
            raise AsmError(raw.line, f"'!' is only legal on guard "
                                     f"predicates, not on {op}")
        operands.append(op)

    if opcode in GUARDLESS_OPCODES and (raw.guard_lead or extra):
        raise AsmError(raw.line,
                       f"{opcode.mnemonic} cannot carry a guard")

    sig = OPERAND_SIGNATURES[opcode]
    if len(operands) != len(sig):
        raise AsmError(raw.line, f"{raw.mnemonic} expects {len(sig)} "
                                 f"operand{'s' if len(sig) != 1 else ''}"
                                 f", got {len(operands)}")
    for slot, (op, allowed) in enumerate(zip(operands, sig), start=1):
        if not isinstance(op, allowed):
            wanted = " or ".join(_KIND_NAMES[k] for k in allowed)
            raise AsmError(raw.line, f"operand {slot} of {raw.mnemonic} "
                                     f"must be {wanted}")

    return Instruction(
        opcode=opcode,
        guard=Guard(raw.guard_lead, extra),
        operands=tuple(operands),
        pc=pc,
        cmp=cmp,
    )


def _lint(program: Program) -> list[str]:
    warnings = []
    insts = program.instructions
    for inst in insts:
        if inst.opcode is Opcode.BSSY:
            target = inst.operands[1].pc
            if target >= len(insts) or insts[target].opcode is not Opcode.BSYNC:
                warnings.append(f"pc {inst.pc}: BSSY target does not point "
                                f"at a BSYNC instruction")
        for op in inst.operands:
            if isinstance(op, Label) and op.pc > len(insts):
                warnings.append(f"pc {inst.pc}: label {op.name!r} points "
                                f"past the end of the program")
    cfg = build_cfg(program)
    warnings.extend(cfg.warnings)
    return warnings


def assemble_file(path: str) -> Program:
    with open(path, "r", encoding="utf-8") as fh:
        return assemble(fh.read(), source_name=path)


# ── pretty printer ──────────────────────────────────────────────────────

def pretty_print(program: Program) -> str:
    """Disassemble back to assemblable text."""
    name_by_pc: dict[int, str] = {}
    for name, pc in program.labels.items():
        name_by_pc.setdefault(pc, name)
    for inst in program.instructions:
        for op in inst.operands:
            if isinstance(op, Label) and op.pc not in name_by_pc:
                name_by_pc[op.pc] = f"L{op.pc}"

    lines = [f".warpsize {program.warp_size}"]
    if program.num_warps != DEFAULT_NUM_WARPS:
        lines.append(f".warps {program.num_warps}")
    if program.mem_words != DEFAULT_MEM_WORDS:
        lines.append(f".mem {program.mem_words}")
    for inst in program.instructions:
        if inst.pc in name_by_pc:
            lines.append(f"{name_by_pc[inst.pc]}:")
        lines.append("    " + _render(inst, name_by_pc))
    end = len(program.instructions)
    if end in name_by_pc:
        lines.append(f"{name_by_pc[end]}:")
    return "\n".join(lines) + "\n"


def _render(inst: Instruction, name_by_pc: dict[int, str]) -> str:
    parts = []
    if inst.guard.lead is not None:
        parts.append(f"@{inst.guard.lead}")
    parts.append(inst.mnemonic)
    ops = []
    if inst.guard.extra is not None:
        ops.append(str(inst.guard.extra))
    for op in inst.operands:
        if isinstance(op, Label):
            ops.append(name_by_pc.get(op.pc, f"L{op.pc}"))
        elif isinstance(op, Imm):
            value = op.value if op.value < (1 << 31) else op.value - (1 << 32)
            ops.append(f"#{value}")
        else:
            ops.append(str(op))
    if ops:
        parts.append(", ".join(ops))
    return " ".join(parts)


# ── control flow graph ──────────────────────────────────────────────────

EXIT_NODE = -1      # virtual sink reached by EXIT, RET and program end


@dataclass
class Cfg:
    """Basic blocks over instruction indices; half-open [start, end)."""

    bounds: tuple[tuple[int, int], ...]
    succs: tuple[tuple[int, ...], ...]
    block_of: tuple[int, ...]           # pc -> block index
    warnings: tuple[str, ...] = ()

    @property
    def n_blocks(self) -> int:
        return len(self.bounds)


def build_cfg(program: Program) -> Cfg:
    insts = program.instructions
    n = len(insts)
    if n == 0:
        return Cfg(bounds=(), succs=(), block_of=())

    leaders = {0}
    for inst in insts:
        if inst.opcode in (Opcode.BRA, Opcode.CALL):
            target = inst.operands[-1].pc
            if target < n:
                leaders.add(target)
        if inst.opcode in (Opcode.BRA, Opcode.EXIT, Opcode.RET, Opcode.CALL):
            if inst.pc + 1 < n:
                leaders.add(inst.pc + 1)

    starts = sorted(leaders)
    bounds = [(s, e) for s, e in zip(starts, starts[1:] + [n])]
    block_of = [0] * n
    for idx, (s, e) in enumerate(bounds):
        for pc in range(s, e):
            block_of[pc] = idx

    def block_at(pc: int) -> int:
        return EXIT_NODE if pc >= n else block_of[pc]

    succs = []
    for s, e in bounds:
        last = insts[e - 1]
        out: list[int] = []
        if last.opcode is Opcode.BRA:
            out.append(block_at(last.operands[-1].pc))
            if not last.guard.is_unconditional:
                out.append(block_at(e))
        elif last.opcode is Opcode.EXIT:
            out.append(EXIT_NODE)
            if not last.guard.is_unconditional:
                out.append(block_at(e))
        elif last.opcode is Opcode.RET:
            out.append(EXIT_NODE)
        elif last.opcode is Opcode.CALL:
            out.append(block_at(last.operands[-1].pc))
            out.append(block_at(e))
        else:
            out.append(block_at(e))
        deduped = []
        for b in out:
            if b not in deduped:
                deduped.append(b)
        succs.append(tuple(deduped))

    warnings = []
    seen = {0}
    work = [0]
    while work:
        b = work.pop()
        for nxt in succs[b]:
            if nxt != EXIT_NODE and nxt not in seen:
                seen.add(nxt)
                work.append(nxt)
    for idx, (s, e) in enumerate(bounds):
        if idx not in seen:
            warnings.append(f"unreachable code at pc {s}..{e - 1}")

    return Cfg(bounds=tuple(bounds), succs=tuple(succs),
               block_of=tuple(block_of), warnings=tuple(warnings))
