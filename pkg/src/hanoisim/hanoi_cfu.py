"""Per-warp control flow unit driven by explicit reconvergence barriers.

The unit keeps two stacks and a small register file:

* WS stack: schedulable paths, each a (pc, active mask) pair.  The top
  entry is the one that issues.
* REC stack: pending reconvergence points.  Each entry names the pc at
  which reunited threads resume and the B register holding the mask of
  threads expected there.
* B registers: a reconvergence mask plus a valid bit.  BSSY writes one,
  BMOV spills and restores them through regular registers, and BREAK
  edits one in place so threads can leave a nested region early.

Threads parked at a barrier accumulate in the waiting mask; threads that
executed EXIT accumulate in the finished mask.  Before every issue the
unit checks whether the top REC entry's mask is valid and fully contained
in waiting.  If so it pops the entry, pushes a WS entry that resumes those
threads after the barrier, clears them from waiting and invalidates the
B register.  The check repeats, so chained reconvergence points resolve
without issuing instructions in between.

At a divergent branch the path followed by more threads is pushed last,
so it executes first.  YIELD deprioritizes the running path by swapping
the top two WS entries when both belong to the reconvergence region on
top of the REC stack, which lets spinlock style loops make progress even
when the lock holder sits below the spinning majority.

Every mutation keeps three pairwise-disjoint groups whose union is the
full warp: lanes on some WS entry, lanes in waiting, lanes in finished.
check_invariants verifies this after each step.
"""

from __future__ import annotations

from dataclasses import dataclass

from .isa import (
    CONTROL_OPCODES,
    NUM_BREGS,
    Imm,
    Instruction,
    Opcode,
    RegR,
    ThreadMask,
)
from .machine import (
    BLOCKED,
    FINISHED,
    Issue,
    SimFault,
    Stall,
    WarpState,
    exec_data,
    read_uniform,
)

__all__ = ["CfuError", "BReg", "WsEntry", "RecEntry", "HanoiCfu"]


class CfuError(Exception):
    """Internal invariant breach; indicates a simulator bug, not a
    program bug."""


@dataclass
class BReg:
    """Reconvergence mask register.  The stored bits survive
    invalidation; only the reconvergence logic is gated on valid."""

    mask_bits: int = 0
    valid: bool = False


@dataclass
class WsEntry:
    pc: int
    active: ThreadMask


@dataclass(frozen=True, slots=True)
class RecEntry:
    pc: int         # where reconverged threads resume
    breg: int


class HanoiCfu:
    """Control flow state for one warp."""

    def __init__(self, warp_size: int, *, warp_id: int = 0,
                 nb_bregs: int = NUM_BREGS, branch_tie: str = "taken",
                 atomic_order: str = "asc"):
        if branch_tie not in ("taken", "not_taken"):
            raise ValueError(f"branch_tie must be taken or not_taken, "
                             f"not {branch_tie!r}")
        self.warp_size = warp_size
        self.warp_id = warp_id
        self.branch_tie = branch_tie
        self.atomic_order = atomic_order
        self.ws: list[WsEntry] = [WsEntry(0, ThreadMask.full(warp_size))]
        self.rec: list[RecEntry] = []
        self.bregs = [BReg() for _ in range(nb_bregs)]
        self.waiting = ThreadMask.empty(warp_size)
        self.finished = ThreadMask.empty(warp_size)
        self.max_ws_depth = 1
        self.max_rec_depth = 0

    # ── scheduling ──────────────────────────────────────────────────────

    def next_issue(self) -> Issue | Stall:
        """Resolve pending reconvergence, then pick the next path."""
        self._reconverge()
        if not self.ws:
            return FINISHED if self.finished.is_full else BLOCKED
        top = self.ws[-1]
        return Issue(top.pc, top.active)

    def _reconverge(self) -> None:
        while self.rec:
            entry = self.rec[-1]
            breg = self.bregs[entry.breg]
            if not breg.valid:
                break
            bits = breg.mask_bits
            if bits == 0:
                # every expected thread broke out or finished; the
                # reconvergence point has nobody left to restart
                self.rec.pop()
                breg.valid = False
                continue
            if bits & ~self.waiting.bits:
                break
            self.rec.pop()
            breg.valid = False
            self.waiting = ThreadMask(self.waiting.bits & ~bits,
                                      self.warp_size)
            self._push_ws(WsEntry(entry.pc, ThreadMask(bits, self.warp_size)))

    def _push_ws(self, entry: WsEntry) -> None:
        self.ws.append(entry)
        self.max_ws_depth = max(self.max_ws_depth, len(self.ws))

    def _push_rec(self, entry: RecEntry) -> None:
        self.rec.append(entry)
        self.max_rec_depth = max(self.max_rec_depth, len(self.rec))

    # ── execution ───────────────────────────────────────────────────────

    def execute(self, inst: Instruction, exec_mask: ThreadMask,
                state: WarpState) -> None:
        """Apply one issued instruction.  exec_mask is the guard result
        and is always a subset of the top entry's active mask."""
        op = inst.opcode
        if op not in CONTROL_OPCODES:
            exec_data(inst, exec_mask, state, self.atomic_order)
            self.ws[-1].pc += 1
            return

        if op is Opcode.BRA:
            self.on_bra(inst.pc, inst.operands[-1].pc, exec_mask)
        elif op is Opcode.EXIT:
            self.on_exit(exec_mask)
        elif op is Opcode.BSSY:
            self.on_bssy(inst.operands[0].index, inst.operands[1].pc)
        elif op is Opcode.BSYNC:
            self.on_bsync(inst.operands[0].index)
        elif op is Opcode.BMOV_RB:
            self.on_bmov_rb(inst.operands[0].index, inst.operands[1].index,
                            exec_mask, state)
        elif op is Opcode.BMOV_BR:
            self.on_bmov_br(inst.operands[0].index, inst.operands[1],
                            exec_mask, state)
        elif op is Opcode.BREAK:
            self.on_break(inst.operands[0].index, exec_mask, inst.pc)
        elif op is Opcode.WARPSYNC:
            self.on_warpsync(inst, state)
        elif op is Opcode.YIELD:
            self.on_yield()
        elif op is Opcode.CALL:
            self.on_call(inst.operands[0].pc, exec_mask, inst.pc)
        elif op is Opcode.RET:
            self.on_ret(inst.operands[0], exec_mask, state, inst.pc)
        else:       # pragma: no cover - dispatch is exhaustive
            raise CfuError(f"unhandled control opcode {op}")

    # ── branch and exit ─────────────────────────────────────────────────

    def on_bra(self, pc: int, target: int, taken: ThreadMask) -> None:
        top = self.ws[-1]
        not_taken = top.active.without(taken)
        if taken.is_empty:
            top.pc += 1
            return
        if not_taken.is_empty:
            top.pc = target
            return
        self.ws.pop()
        taken_entry = WsEntry(target, taken)
        fall_entry = WsEntry(pc + 1, not_taken)
        if taken.popcount > not_taken.popcount:
            minority, majority = fall_entry, taken_entry
        elif taken.popcount < not_taken.popcount:
            minority, majority = taken_entry, fall_entry
        elif self.branch_tie == "taken":
            minority, majority = fall_entry, taken_entry
        else:
            minority, majority = taken_entry, fall_entry
        self._push_ws(minority)
        self._push_ws(majority)

    def on_exit(self, exiting: ThreadMask) -> None:
        self.finished = self.finished | exiting
        for breg in self.bregs:
            # a finished thread can never arrive at a barrier
            breg.mask_bits &= ~exiting.bits
        top = self.ws[-1]
        if exiting.bits == top.active.bits:
            self.ws.pop()
        else:
            top.active = top.active.without(exiting)
            top.pc += 1

    # ── reconvergence barriers ──────────────────────────────────────────

    def on_bssy(self, breg: int, target: int) -> None:
        top = self.ws[-1]
        reg = self.bregs[breg]
        reg.mask_bits = top.active.bits
        reg.valid = True
        # threads resume at the instruction after the target BSYNC
        self._push_rec(RecEntry(target + 1, breg))
        top.pc += 1

    def on_bsync(self, breg: int) -> None:
        # the operand names the mask for readers; reconvergence itself is
        # driven by the REC stack
        top = self.ws.pop()
        self.waiting = self.waiting | top.active

    def on_warpsync(self, inst: Instruction, state: WarpState) -> None:
        top = self.ws[-1]
        operand = inst.operands[0]
        if isinstance(operand, Imm):
            bits = operand.value
        else:
            bits = read_uniform(state, top.active, operand, pc=inst.pc)
        if bits >> self.warp_size:
            raise SimFault(f"WARPSYNC mask {bits:#x} does not fit a warp "
                           f"of {self.warp_size}",
                           warp=self.warp_id, pc=inst.pc)
        reconv = ThreadMask(bits & ~self.finished.bits, self.warp_size)
        if not top.active.issubset(reconv):
            raise SimFault("WARPSYNC executed by threads outside its mask",
                           warp=self.warp_id, pc=inst.pc)
        resume = inst.pc + 1
        if not self._rec_has(resume, reconv.bits):
            breg = self._alloc_breg(inst.pc)
            reg = self.bregs[breg]
            reg.mask_bits = reconv.bits
            reg.valid = True
            self._push_rec(RecEntry(resume, breg))
        self.ws.pop()
        self.waiting = self.waiting | top.active

    def _rec_has(self, resume: int, bits: int) -> bool:
        for entry in self.rec:
            reg = self.bregs[entry.breg]
            if entry.pc == resume and reg.valid and reg.mask_bits == bits:
                return True
        return False

    def _alloc_breg(self, pc: int) -> int:
        in_use = {entry.breg for entry in self.rec}
        for idx, reg in enumerate(self.bregs):
            if not reg.valid and idx not in in_use:
                return idx
        raise SimFault("no free B register for WARPSYNC",
                       warp=self.warp_id, pc=pc)

    def on_break(self, breg: int, remove: ThreadMask, pc: int) -> None:
        top = self.ws[-1]
        top.pc += 1
        if remove.is_empty:
            return
        reg = self.bregs[breg]
        if not reg.valid:
            raise SimFault(f"BREAK on invalid B{breg}",
                           warp=self.warp_id, pc=pc)
        reg.mask_bits &= ~remove.bits

    # ── mask register moves ─────────────────────────────────────────────

    def on_bmov_rb(self, rd: int, breg: int, exec_mask: ThreadMask,
                   state: WarpState) -> None:
        """Spill B to lanes of R, then invalidate B."""
        top = self.ws[-1]
        top.pc += 1
        if exec_mask.is_empty:
            return
        reg = self.bregs[breg]
        for lane in exec_mask.lanes():
            state.rregs[lane][rd] = reg.mask_bits
        reg.valid = False

    def on_bmov_br(self, breg: int, rs: RegR, exec_mask: ThreadMask,
                   state: WarpState) -> None:
        """Restore B from R lanes, dropping finished threads."""
        top = self.ws[-1]
        pc = top.pc
        top.pc += 1
        if exec_mask.is_empty:
            return
        bits = read_uniform(state, exec_mask, rs, pc=pc)
        if bits >> self.warp_size:
            raise SimFault(f"value {bits:#x} restored into B{breg} is not "
                           f"a mask for a warp of {self.warp_size}",
                           warp=self.warp_id, pc=pc)
        reg = self.bregs[breg]
        reg.mask_bits = bits & ~self.finished.bits
        reg.valid = True

    # ── scheduling hints and calls ──────────────────────────────────────

    def on_yield(self) -> None:
        top = self.ws[-1]
        top.pc += 1     # the yielding path resumes after the YIELD
        if len(self.ws) < 2 or not self.rec:
            return
        reg = self.bregs[self.rec[-1].breg]
        if not reg.valid:
            return
        union = self.ws[-1].active.bits | self.ws[-2].active.bits
        if union & ~reg.mask_bits:
            return      # not siblings of the same pending barrier
        self.ws[-1], self.ws[-2] = self.ws[-2], self.ws[-1]

    def on_call(self, target: int, exec_mask: ThreadMask, pc: int) -> None:
        top = self.ws[-1]
        if exec_mask.is_empty:
            top.pc += 1
            return
        if exec_mask.bits != top.active.bits:
            raise SimFault("divergent CALL is not supported",
                           warp=self.warp_id, pc=pc)
        top.pc = target

    def on_ret(self, rs: RegR, exec_mask: ThreadMask, state: WarpState,
               pc: int) -> None:
        top = self.ws[-1]
        if exec_mask.is_empty:
            top.pc += 1
            return
        if exec_mask.bits != top.active.bits:
            raise SimFault("divergent RET is not supported",
                           warp=self.warp_id, pc=pc)
        top.pc = read_uniform(state, exec_mask, rs, pc=pc)

    # ── checking and inspection ─────────────────────────────────────────

    def check_invariants(self) -> None:
        seen = 0
        for entry in self.ws:
            if entry.active.is_empty:
                raise CfuError(f"WS entry at pc {entry.pc} has no threads")
            if seen & entry.active.bits:
                raise CfuError("WS entries overlap")
            seen |= entry.active.bits
        for name, mask in (("waiting", self.waiting),
                           ("finished", self.finished)):
            if seen & mask.bits:
                raise CfuError(f"{name} overlaps a WS entry")
            seen |= mask.bits
        if self.waiting.bits & self.finished.bits:
            raise CfuError("waiting and finished overlap")
        full = (1 << self.warp_size) - 1
        if seen != full:
            raise CfuError(f"threads unaccounted for: "
                           f"{format(full & ~seen, f'0{self.warp_size}b')}")
        for idx, reg in enumerate(self.bregs):
            if reg.mask_bits >> self.warp_size:
                raise CfuError(f"B{idx} mask does not fit the warp")
            if reg.valid and reg.mask_bits & self.finished.bits:
                raise CfuError(f"valid B{idx} contains finished threads")
        for entry in self.rec:
            if not 0 <= entry.breg < len(self.bregs):
                raise CfuError(f"REC entry names B{entry.breg}")

    def dump(self) -> str:
        lines = ["WS stack (top first):"]
        for entry in reversed(self.ws):
            lines.append(f"  pc={entry.pc} active={entry.active}")
        if not self.ws:
            lines.append("  (empty)")
        lines.append("REC stack (top first):")
        for entry in reversed(self.rec):
            lines.append(f"  pc={entry.pc} breg=B{entry.breg}")
        if not self.rec:
            lines.append("  (empty)")
        lines.append("B registers:")
        for idx, reg in enumerate(self.bregs):
            mask = format(reg.mask_bits, f"0{self.warp_size}b")
            lines.append(f"  B{idx} V={int(reg.valid)} mask={mask}")
        lines.append(f"waiting : {self.waiting}")
        lines.append(f"finished: {self.finished}")
        return "\n".join(lines)
