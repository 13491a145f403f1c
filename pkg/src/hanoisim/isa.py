"""Instruction set core: thread masks, predication, opcodes, operands.

Programs run on a warp of 2..32 threads.  A ThreadMask is an immutable set
of lane ids rendered MSB-first, so lane 0 is the rightmost character
("1100" means lanes 2 and 3).  Every instruction may carry a guard of up
to two predicate references; the instruction executes only in lanes where
all present predicates evaluate true.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "WARP_SIZE_MIN",
    "WARP_SIZE_MAX",
    "NUM_RREGS",
    "NUM_PREGS",
    "NUM_BREGS",
    "MaskError",
    "ThreadMask",
    "mask_to_string",
    "string_to_mask",
    "PredRef",
    "Guard",
    "UNGUARDED",
    "eval_guard",
    "Opcode",
    "ISETP_CMPS",
    "CONTROL_OPCODES",
    "RegR",
    "RegP",
    "RegB",
    "Imm",
    "Label",
    "SReg",
    "SPECIAL_REGS",
    "Operand",
    "Instruction",
    "OPERAND_SIGNATURES",
    "GUARDLESS_OPCODES",
    "LEAD_PRED_OPCODES",
]

# ── architectural limits ────────────────────────────────────────────────

WARP_SIZE_MIN = 2
WARP_SIZE_MAX = 32
NUM_RREGS = 64          # R0..R63, 32-bit
NUM_PREGS = 7           # P0..P6, one bit per lane
NUM_BREGS = 8           # B0..B7, mask plus valid bit


class MaskError(ValueError):
    """Raised for malformed mask text or out-of-range mask bits."""


# ── thread masks ────────────────────────────────────────────────────────

@dataclass(frozen=True, slots=True)
class ThreadMask:
    """Immutable set of active lanes within one warp."""

    bits: int
    warp_size: int

    def __post_init__(self) -> None:
        if not WARP_SIZE_MIN <= self.warp_size <= WARP_SIZE_MAX:
            raise MaskError(f"warp size {self.warp_size} outside "
                            f"{WARP_SIZE_MIN}..{WARP_SIZE_MAX}")
        if self.bits < 0 or self.bits >> self.warp_size:
            raise MaskError(f"mask bits {self.bits:#x} do not fit in "
                            f"{self.warp_size} lanes")

    @classmethod
    def empty(cls, warp_size: int) -> "ThreadMask":
        return cls(0, warp_size)

    @classmethod
    def full(cls, warp_size: int) -> "ThreadMask":
        return cls((1 << warp_size) - 1, warp_size)

    @classmethod
    def from_lanes(cls, lanes, warp_size: int) -> "ThreadMask":
        bits = 0
        for lane in lanes:
            if not 0 <= lane < warp_size:
                raise MaskError(f"lane {lane} outside warp of {warp_size}")
            bits |= 1 << lane
        return cls(bits, warp_size)

    # set queries -------------------------------------------------------

    @property
    def popcount(self) -> int:
        return self.bits.bit_count()

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    @property
    def is_full(self) -> bool:
        return self.bits == (1 << self.warp_size) - 1

    def has_lane(self, lane: int) -> bool:
        return bool(self.bits >> lane & 1)

    def lanes(self) -> list[int]:
        """Set lane ids in ascending order."""
        return [i for i in range(self.warp_size) if self.bits >> i & 1]

    def issubset(self, other: "ThreadMask") -> bool:
        self._check_peer(other)
        return self.bits & ~other.bits == 0

    # set algebra -------------------------------------------------------

    def __and__(self, other: "ThreadMask") -> "ThreadMask":
        self._check_peer(other)
        return ThreadMask(self.bits & other.bits, self.warp_size)

    def __or__(self, other: "ThreadMask") -> "ThreadMask":
        self._check_peer(other)
        return ThreadMask(self.bits | other.bits, self.warp_size)

    def without(self, other: "ThreadMask") -> "ThreadMask":
        self._check_peer(other)
        return ThreadMask(self.bits & ~other.bits, self.warp_size)

    def _check_peer(self, other: "ThreadMask") -> None:
        if self.warp_size != other.warp_size:
            raise MaskError(f"mixed warp sizes {self.warp_size} and "
                            f"{other.warp_size}")

    def __str__(self) -> str:
        return format(self.bits, f"0{self.warp_size}b")


def mask_to_string(mask: ThreadMask) -> str:
    """Render MSB-first; lane 0 is the rightmost character."""
    return str(mask)


def string_to_mask(text: str, warp_size: int) -> ThreadMask:
    if len(text) != warp_size:
        raise MaskError(f"mask {text!r} has {len(text)} characters, "
                        f"expected {warp_size}")
    if set(text) - {"0", "1"}:
        raise MaskError(f"mask {text!r} contains characters other than 0/1")
    return ThreadMask(int(text, 2), warp_size)


# ── predication ─────────────────────────────────────────────────────────

@dataclass(frozen=True, slots=True)
class PredRef:
    """Reference to a predicate register, optionally negated."""

    index: int
    negated: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.index < NUM_PREGS:
            raise ValueError(f"predicate index {self.index} outside "
                             f"0..{NUM_PREGS - 1}")

    def __str__(self) -> str:
        return f"{'!' if self.negated else ''}P{self.index}"


@dataclass(frozen=True, slots=True)
class Guard:
    """Up to two predicate references, ANDed together.

    `lead` is the @Pk prefix, `extra` the optional predicate written as the
    first operand of BRA, BREAK and EXIT.  An instruction with no guard
    executes in every issued lane.
    """

    lead: PredRef | None = None
    extra: PredRef | None = None

    @property
    def is_unconditional(self) -> bool:
        return self.lead is None and self.extra is None


UNGUARDED = Guard()


def eval_guard(guard: Guard, active: ThreadMask, pregs) -> ThreadMask:
    """Lanes of `active` where every present predicate evaluates true.

    `pregs` holds one int per predicate register, bit i giving lane i's
    value.  The result is always a subset of `active`.
    """
    bits = active.bits
    full = (1 << active.warp_size) - 1
    for ref in (guard.lead, guard.extra):
        if ref is None:
            continue
        value = pregs[ref.index]
        if ref.negated:
            value = ~value & full
        bits &= value
    return ThreadMask(bits, active.warp_size)


# ── opcodes ─────────────────────────────────────────────────────────────

class Opcode(Enum):
    MOV = "MOV"
    IADD = "IADD"
    ISETP = "ISETP"
    S2R = "S2R"
    LD = "LD"
    ST = "ST"
    ATOMCAS = "ATOMCAS"
    ATOMEXCH = "ATOMEXCH"
    NOP = "NOP"
    BRA = "BRA"
    EXIT = "EXIT"
    BSSY = "BSSY"
    BSYNC = "BSYNC"
    BMOV_RB = "BMOV_RB"     # BMOV Rd, Bs: read mask into lanes, invalidate
    BMOV_BR = "BMOV_BR"     # BMOV Bd, Rs: write mask from lanes, validate
    BREAK = "BREAK"
    WARPSYNC = "WARPSYNC"
    YIELD = "YIELD"
    CALL = "CALL"
    RET = "RET"

    @property
    def mnemonic(self) -> str:
        if self in (Opcode.BMOV_RB, Opcode.BMOV_BR):
            return "BMOV"
        return self.value


ISETP_CMPS = ("EQ", "NE", "LT", "LE", "GT", "GE")

# Opcodes the scheduler hands to the control flow unit rather than the
# data path.
CONTROL_OPCODES = frozenset({
    Opcode.BRA, Opcode.EXIT, Opcode.BSSY, Opcode.BSYNC, Opcode.BMOV_RB,
    Opcode.BMOV_BR, Opcode.BREAK, Opcode.WARPSYNC, Opcode.YIELD,
    Opcode.CALL, Opcode.RET,
})

# The assembler rejects @Pk guards on these: their effect is a property of
# the whole issued path, not of individual lanes.
GUARDLESS_OPCODES = frozenset({
    Opcode.BSSY, Opcode.BSYNC, Opcode.YIELD, Opcode.WARPSYNC,
})

# Opcodes accepting the second predicate written as a leading operand,
# e.g. "@P0 BRA !P1, L".
LEAD_PRED_OPCODES = frozenset({Opcode.BRA, Opcode.BREAK, Opcode.EXIT})


# ── operands ────────────────────────────────────────────────────────────

@dataclass(frozen=True, slots=True)
class RegR:
    index: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < NUM_RREGS:
            raise ValueError(f"R{self.index} outside R0..R{NUM_RREGS - 1}")

    def __str__(self) -> str:
        return f"R{self.index}"


@dataclass(frozen=True, slots=True)
class RegP:
    index: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < NUM_PREGS:
            raise ValueError(f"P{self.index} outside P0..P{NUM_PREGS - 1}")

    def __str__(self) -> str:
        return f"P{self.index}"


@dataclass(frozen=True, slots=True)
class RegB:
    index: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < NUM_BREGS:
            raise ValueError(f"B{self.index} outside B0..B{NUM_BREGS - 1}")

    def __str__(self) -> str:
        return f"B{self.index}"


@dataclass(frozen=True, slots=True)
class Imm:
    value: int          # stored as unsigned 32-bit

    def __str__(self) -> str:
        return f"#{self.value}"


@dataclass(frozen=True, slots=True)
class Label:
    """Resolved code address.  Name is cosmetic and ignored for equality."""

    pc: int
    name: str = field(default="", compare=False)

    def __str__(self) -> str:
        return self.name or f"@{self.pc}"


SPECIAL_REGS = ("SR_TID", "SR_WARPID")


@dataclass(frozen=True, slots=True)
class SReg:
    name: str

    def __post_init__(self) -> None:
        if self.name not in SPECIAL_REGS:
            raise ValueError(f"unknown special register {self.name}")

    def __str__(self) -> str:
        return self.name


Operand = RegR | RegP | RegB | Imm | Label | SReg


# ── instructions ────────────────────────────────────────────────────────

@dataclass(frozen=True, slots=True)
class Instruction:
    """One decoded instruction.  pc is its index in the program."""

    opcode: Opcode
    guard: Guard = UNGUARDED
    operands: tuple[Operand, ...] = ()
    pc: int = 0
    cmp: str | None = None      # ISETP comparison, e.g. "LT"

    @property
    def mnemonic(self) -> str:
        if self.opcode is Opcode.ISETP:
            return f"ISETP.{self.cmp}"
        return self.opcode.mnemonic


# Allowed operand kinds per slot, after the optional leading predicate of
# BRA/BREAK/EXIT has been folded into the guard.
OPERAND_SIGNATURES: dict[Opcode, tuple[tuple[type, ...], ...]] = {
    Opcode.MOV: ((RegR,), (Imm, Label, RegR)),
    Opcode.IADD: ((RegR,), (RegR,), (RegR, Imm)),
    Opcode.ISETP: ((RegP,), (RegR,), (RegR, Imm)),
    Opcode.S2R: ((RegR,), (SReg,)),
    Opcode.LD: ((RegR,), (RegR,)),
    Opcode.ST: ((RegR,), (RegR,)),
    Opcode.ATOMCAS: ((RegR,), (RegR,), (RegR,), (RegR,)),
    Opcode.ATOMEXCH: ((RegR,), (RegR,), (RegR,)),
    Opcode.NOP: (),
    Opcode.BRA: ((Label,),),
    Opcode.EXIT: (),
    Opcode.BSSY: ((RegB,), (Label,)),
    Opcode.BSYNC: ((RegB,),),
    Opcode.BMOV_RB: ((RegR,), (RegB,)),
    Opcode.BMOV_BR: ((RegB,), (RegR,)),
    Opcode.BREAK: ((RegB,),),
    Opcode.WARPSYNC: ((Imm, RegR),),
    Opcode.YIELD: (),
    Opcode.CALL: ((Label,),),
    Opcode.RET: ((RegR,),),
}
