"""Stack-based reconvergence baseline and post-dominator analysis.

This models the classic pre-independent-thread-scheduling discipline: a
single stack of (pc, active mask, reconvergence pc) entries per warp.  A
divergent branch replaces the top entry with a reconvergence entry at the
branch's immediate post-dominator plus one entry per outgoing path; an
entry pops when its pc reaches its reconvergence pc.  The scheduler only
ever runs the top entry, which is what makes spin loops across divergent
paths hang: the path holding a lock can sit below the spinning path
forever.

Barrier-style opcodes (BSSY, BSYNC, BMOV, BREAK, WARPSYNC, YIELD) are
executed as no-ops so programs written for the barrier engine still run
here, pc-for-pc, for comparison.

Immediate post-dominators come from an iterative dominance computation on
the reversed control flow graph.
"""

from __future__ import annotations

from dataclasses import dataclass

from .asm import EXIT_NODE, Cfg, Program, build_cfg
from .isa import CONTROL_OPCODES, Instruction, Opcode, ThreadMask
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

__all__ = ["compute_ipdom", "SimtEntry", "SimtStackCfu", "StackError"]


class StackError(Exception):
    """Internal invariant breach in the baseline engine."""


# ── immediate post-dominators ───────────────────────────────────────────

def compute_ipdom(cfg: Cfg, program_len: int | None = None) -> dict[int, int]:
    """Map each conditional branch pc to its reconvergence pc.

    The reconvergence pc is the first instruction of the branch block's
    immediate post-dominator block.  Branches post-dominated only by the
    virtual exit (including branches that cannot reach the exit at all)
    map to the program length, a pc no path reaches before popping.
    """
    n = cfg.n_blocks
    if n == 0:
        return {}
    if program_len is None:
        program_len = cfg.bounds[-1][1]
    exit_node = n
    succs = [[exit_node if s == EXIT_NODE else s for s in cfg.succs[b]]
             for b in range(n)]

    preds: list[list[int]] = [[] for _ in range(n + 1)]
    for b in range(n):
        for s in succs[b]:
            preds[s].append(b)

    # reverse post-order of the reversed graph, rooted at the exit
    order: list[int] = []
    seen = [False] * (n + 1)
    stack: list[tuple[int, int]] = [(exit_node, 0)]
    seen[exit_node] = True
    while stack:
        node, i = stack[-1]
        if i < len(preds[node]):
            stack[-1] = (node, i + 1)
            nxt = preds[node][i]
            if not seen[nxt]:
                seen[nxt] = True
                stack.append((nxt, 0))
        else:
            stack.pop()
            order.append(node)
    order.reverse()
    index = {node: i for i, node in enumerate(order)}

    ipdom: dict[int, int] = {exit_node: exit_node}

    def intersect(a: int, b: int) -> int:
        while a != b:
            while index[a] > index[b]:
                a = ipdom[a]
            while index[b] > index[a]:
                b = ipdom[b]
        return a

    changed = True
    while changed:
        changed = False
        for node in order:
            if node == exit_node:
                continue
            new = None
            for s in succs[node]:
                if s in ipdom:
                    new = s if new is None else intersect(new, s)
            if new is not None and ipdom.get(node) != new:
                ipdom[node] = new
                changed = True

    table: dict[int, int] = {}
    for b in range(n):
        if len(succs[b]) != 2:
            continue
        start, end = cfg.bounds[b]
        inst_pc = end - 1
        target = ipdom.get(b, exit_node)
        if target == exit_node:
            table[inst_pc] = program_len
        else:
            table[inst_pc] = cfg.bounds[target][0]
    return table


# ── the stack engine ────────────────────────────────────────────────────

@dataclass
class SimtEntry:
    pc: int
    active: ThreadMask
    reconv_pc: int | None       # None for the base entry


class SimtStackCfu:
    """Control flow state for one warp under stack reconvergence."""

    def __init__(self, program: Program, *, warp_id: int = 0,
                 warp_size: int | None = None, priority: str = "taken",
                 branch_tie: str = "taken", atomic_order: str = "asc"):
        if priority not in ("taken", "not_taken", "majority"):
            raise ValueError(f"priority must be taken, not_taken or "
                             f"majority, not {priority!r}")
        if branch_tie not in ("taken", "not_taken"):
            raise ValueError(f"branch_tie must be taken or not_taken, "
                             f"not {branch_tie!r}")
        self.warp_size = warp_size or program.warp_size
        self.warp_id = warp_id
        self.priority = priority
        self.branch_tie = branch_tie
        self.atomic_order = atomic_order
        self.ipdom = compute_ipdom(build_cfg(program), len(program))
        self.stack: list[SimtEntry] = [
            SimtEntry(0, ThreadMask.full(self.warp_size), None)]
        self.finished = ThreadMask.empty(self.warp_size)
        self.max_depth = 1

    # ── scheduling ──────────────────────────────────────────────────────

    def next_issue(self) -> Issue | Stall:
        while self.stack:
            top = self.stack[-1]
            if top.reconv_pc is not None and top.pc == top.reconv_pc:
                self.stack.pop()
                continue
            return Issue(top.pc, top.active)
        return FINISHED if self.finished.is_full else BLOCKED

    # ── execution ───────────────────────────────────────────────────────

    def execute(self, inst: Instruction, exec_mask: ThreadMask,
                state: WarpState) -> None:
        op = inst.opcode
        if op not in CONTROL_OPCODES:
            exec_data(inst, exec_mask, state, self.atomic_order)
            self.stack[-1].pc += 1
            return
        if op is Opcode.BRA:
            self.on_bra(inst.pc, inst.operands[-1].pc, exec_mask)
        elif op is Opcode.EXIT:
            self.on_exit(exec_mask)
        elif op is Opcode.CALL:
            self._jump(inst.operands[0].pc, exec_mask, inst.pc, "CALL")
        elif op is Opcode.RET:
            top = self.stack[-1]
            if exec_mask.is_empty:
                top.pc += 1
            elif exec_mask.bits != top.active.bits:
                raise SimFault("divergent RET is not supported",
                               warp=self.warp_id, pc=inst.pc)
            else:
                top.pc = read_uniform(state, exec_mask, inst.operands[0],
                                      pc=inst.pc)
        else:
            # barrier opcode: no effect on this engine
            self.stack[-1].pc += 1

    def _jump(self, target: int, exec_mask: ThreadMask, pc: int,
              what: str) -> None:
        top = self.stack[-1]
        if exec_mask.is_empty:
            top.pc += 1
            return
        if exec_mask.bits != top.active.bits:
            raise SimFault(f"divergent {what} is not supported",
                           warp=self.warp_id, pc=pc)
        top.pc = target

    def on_bra(self, pc: int, target: int, taken: ThreadMask) -> None:
        top = self.stack[-1]
        not_taken = top.active.without(taken)
        if taken.is_empty:
            top.pc += 1
            return
        if not_taken.is_empty or target == pc + 1:
            top.pc = target
            return
        reconv = self.ipdom[pc]
        self.stack.pop()
        self.stack.append(SimtEntry(reconv, top.active, top.reconv_pc))
        taken_entry = SimtEntry(target, taken, reconv)
        fall_entry = SimtEntry(pc + 1, not_taken, reconv)
        if self.priority == "taken":
            first, second = fall_entry, taken_entry
        elif self.priority == "not_taken":
            first, second = taken_entry, fall_entry
        elif taken.popcount > not_taken.popcount:
            first, second = fall_entry, taken_entry
        elif taken.popcount < not_taken.popcount:
            first, second = taken_entry, fall_entry
        elif self.branch_tie == "taken":
            first, second = fall_entry, taken_entry
        else:
            first, second = taken_entry, fall_entry
        self.stack.append(first)
        self.stack.append(second)
        self.max_depth = max(self.max_depth, len(self.stack))
        if len(self.stack) > 2 * self.warp_size:
            raise StackError(f"stack depth {len(self.stack)} exceeds "
                             f"{2 * self.warp_size}")

    def on_exit(self, exiting: ThreadMask) -> None:
        self.finished = self.finished | exiting
        top = self.stack[-1]
        partial = exiting.bits != top.active.bits
        # remove finished threads everywhere, including reconvergence
        # entries, so they are not resurrected at a join
        for entry in self.stack:
            entry.active = entry.active.without(exiting)
        self.stack = [e for e in self.stack if not e.active.is_empty]
        if partial:
            # exiting was a strict subset, so the top entry survived
            top.pc += 1

    # ── checking and inspection ─────────────────────────────────────────

    def check_invariants(self) -> None:
        for entry in self.stack:
            if entry.active.is_empty:
                raise StackError("empty stack entry")
            if entry.active.bits & self.finished.bits:
                raise StackError("finished thread still on the stack")
        if len(self.stack) > 2 * self.warp_size:
            raise StackError(f"stack depth {len(self.stack)} exceeds "
                             f"{2 * self.warp_size}")

    def dump(self) -> str:
        lines = ["SIMT stack (top first):"]
        for entry in reversed(self.stack):
            reconv = "-" if entry.reconv_pc is None else entry.reconv_pc
            lines.append(f"  pc={entry.pc} active={entry.active} "
                         f"reconv={reconv}")
        if not self.stack:
            lines.append("  (empty)")
        lines.append(f"finished: {self.finished}")
        return "\n".join(lines)
