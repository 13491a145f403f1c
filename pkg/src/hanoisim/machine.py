"""Architectural warp state and data-path execution.

Values are 32-bit two's complement.  Data instructions execute one lane
at a time so memory effects of earlier lanes are visible to later ones;
the lane order is ascending thread id by default and can be flipped to
descending, which decides who wins contended atomics within a single
instruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .isa import (
    NUM_PREGS,
    NUM_RREGS,
    Imm,
    Instruction,
    Label,
    Opcode,
    RegR,
    ThreadMask,
)

__all__ = [
    "SimFault",
    "SharedMemory",
    "WarpState",
    "exec_data",
    "read_uniform",
    "u32",
    "s32",
    "Issue",
    "Stall",
    "FINISHED",
    "BLOCKED",
]

_U32 = 0xFFFFFFFF


def u32(value: int) -> int:
    return value & _U32


def s32(value: int) -> int:
    value &= _U32
    return value - (1 << 32) if value >= (1 << 31) else value


@dataclass(frozen=True, slots=True)
class Issue:
    """A schedulable path: issue the instruction at pc for these lanes."""

    pc: int
    active: ThreadMask


class Stall(Enum):
    """Why a warp cannot issue: done, or stuck waiting forever."""

    FINISHED = "finished"
    BLOCKED = "blocked"


FINISHED = Stall.FINISHED
BLOCKED = Stall.BLOCKED


class SimFault(Exception):
    """Runtime fault; carries enough context to locate the bad access."""

    def __init__(self, message: str, *, warp: int | None = None,
                 thread: int | None = None, pc: int | None = None):
        self.warp = warp
        self.thread = thread
        self.pc = pc
        where = []
        if warp is not None:
            where.append(f"warp {warp}")
        if thread is not None:
            where.append(f"thread {thread}")
        if pc is not None:
            where.append(f"pc {pc}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class SharedMemory:
    """Word-addressed scratch memory shared by all warps, zero filled."""

    def __init__(self, n_words: int):
        self.words = [0] * n_words

    def __len__(self) -> int:
        return len(self.words)

    def load(self, addr: int, *, warp: int, thread: int, pc: int) -> int:
        self._check(addr, warp=warp, thread=thread, pc=pc)
        return self.words[addr]

    def store(self, addr: int, value: int, *, warp: int, thread: int,
              pc: int) -> None:
        self._check(addr, warp=warp, thread=thread, pc=pc)
        self.words[addr] = u32(value)

    def _check(self, addr: int, *, warp: int, thread: int, pc: int) -> None:
        if not self.words:
            raise SimFault("no shared memory declared (.mem 0)",
                           warp=warp, thread=thread, pc=pc)
        if not 0 <= addr < len(self.words):
            raise SimFault(f"memory address {addr} outside 0..{len(self.words) - 1}",
                           warp=warp, thread=thread, pc=pc)


@dataclass
class WarpState:
    """Registers of a single warp.

    rregs[lane][i] is lane's R{i}; pregs[i] packs P{i} across lanes,
    bit k giving lane k's value.
    """

    warp_id: int
    warp_size: int
    memory: SharedMemory
    rregs: list[list[int]] = field(default_factory=list)
    pregs: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.rregs:
            self.rregs = [[0] * NUM_RREGS for _ in range(self.warp_size)]
        if not self.pregs:
            self.pregs = [0] * NUM_PREGS

    def set_pred(self, index: int, lane: int, value: bool) -> None:
        if value:
            self.pregs[index] |= 1 << lane
        else:
            self.pregs[index] &= ~(1 << lane)


def _lane_order(mask: ThreadMask, order: str) -> list[int]:
    lanes = mask.lanes()
    if order == "desc":
        lanes.reverse()
    elif order != "asc":
        raise ValueError(f"lane order must be asc or desc, not {order!r}")
    return lanes


def _src_value(state: WarpState, lane: int, op) -> int:
    if isinstance(op, RegR):
        return state.rregs[lane][op.index]
    if isinstance(op, Imm):
        return op.value
    if isinstance(op, Label):
        return op.pc
    raise TypeError(f"not a source operand: {op!r}")


_CMP_FUNCS = {
    "EQ": lambda a, b: a == b,
    "NE": lambda a, b: a != b,
    "LT": lambda a, b: a < b,
    "LE": lambda a, b: a <= b,
    "GT": lambda a, b: a > b,
    "GE": lambda a, b: a >= b,
}


def read_uniform(state: WarpState, exec_mask: ThreadMask, reg: RegR,
                 *, pc: int) -> int:
    """Read a register that every executing lane must agree on."""
    lanes = exec_mask.lanes()
    if not lanes:
        raise SimFault(f"uniform read of {reg} with no executing lanes",
                       warp=state.warp_id, pc=pc)
    value = state.rregs[lanes[0]][reg.index]
    for lane in lanes[1:]:
        if state.rregs[lane][reg.index] != value:
            raise SimFault(f"lanes disagree on {reg}: lane {lanes[0]} has "
                           f"{value}, lane {lane} has "
                           f"{state.rregs[lane][reg.index]}",
                           warp=state.warp_id, thread=lane, pc=pc)
    return value


def exec_data(inst: Instruction, exec_mask: ThreadMask, state: WarpState,
              order: str = "asc") -> None:
    """Run one data instruction in the given lanes.

    Lanes outside exec_mask are untouched.  The program counter is owned
    by the control flow unit and not modified here.
    """
    op = inst.opcode
    ops = inst.operands
    mem = state.memory
    wid = state.warp_id
    pc = inst.pc

    if op is Opcode.NOP:
        return

    if op is Opcode.MOV:
        dst = ops[0].index
        for lane in _lane_order(exec_mask, order):
            state.rregs[lane][dst] = u32(_src_value(state, lane, ops[1]))
        return

    if op is Opcode.IADD:
        dst, src_a = ops[0].index, ops[1]
        for lane in _lane_order(exec_mask, order):
            a = _src_value(state, lane, src_a)
            b = _src_value(state, lane, ops[2])
            state.rregs[lane][dst] = u32(a + b)
        return

    if op is Opcode.ISETP:
        cmp = _CMP_FUNCS[inst.cmp]
        dst = ops[0].index
        for lane in _lane_order(exec_mask, order):
            a = s32(_src_value(state, lane, ops[1]))
            b = s32(_src_value(state, lane, ops[2]))
            state.set_pred(dst, lane, cmp(a, b))
        return

    if op is Opcode.S2R:
        dst = ops[0].index
        source = ops[1].name
        for lane in _lane_order(exec_mask, order):
            state.rregs[lane][dst] = lane if source == "SR_TID" else wid
        return

    if op is Opcode.LD:
        dst = ops[0].index
        for lane in _lane_order(exec_mask, order):
            addr = state.rregs[lane][ops[1].index]
            state.rregs[lane][dst] = mem.load(addr, warp=wid, thread=lane,
                                              pc=pc)
        return

    if op is Opcode.ST:
        for lane in _lane_order(exec_mask, order):
            addr = state.rregs[lane][ops[0].index]
            mem.store(addr, state.rregs[lane][ops[1].index],
                      warp=wid, thread=lane, pc=pc)
        return

    if op is Opcode.ATOMCAS:
        dst = ops[0].index
        for lane in _lane_order(exec_mask, order):
            addr = state.rregs[lane][ops[1].index]
            old = mem.load(addr, warp=wid, thread=lane, pc=pc)
            if old == state.rregs[lane][ops[2].index]:
                mem.store(addr, state.rregs[lane][ops[3].index],
                          warp=wid, thread=lane, pc=pc)
            state.rregs[lane][dst] = old
        return

    if op is Opcode.ATOMEXCH:
        dst = ops[0].index
        for lane in _lane_order(exec_mask, order):
            addr = state.rregs[lane][ops[1].index]
            old = mem.load(addr, warp=wid, thread=lane, pc=pc)
            mem.store(addr, state.rregs[lane][ops[2].index],
                      warp=wid, thread=lane, pc=pc)
            state.rregs[lane][dst] = old
        return

    raise ValueError(f"exec_data cannot run control opcode {op.mnemonic}")
