"""Run driver: schedules warps round-robin and collects the issue trace.

Each warp owns a control flow unit (the barrier engine or the stack
baseline) and its architectural registers; all warps of a launch share
one memory.  The driver issues one instruction per runnable warp per
turn, which makes multi-warp interleaving deterministic.  A warp ends
in one of four ways: finished, deadlocked (its unit can never issue
again), out of step budget, or faulted.  A fault stops the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .asm import Program
from .hanoi_cfu import HanoiCfu
from .isa import WARP_SIZE_MAX, WARP_SIZE_MIN, eval_guard
from .machine import BLOCKED, FINISHED, SharedMemory, SimFault, WarpState
from .simt_stack_cfu import SimtStackCfu
from .trace_tools import TraceEvent

__all__ = ["RunConfig", "WarpOutcome", "Warp", "SimResult", "Simulation",
           "run_program"]

ENGINES = ("hanoi", "simtstack")


@dataclass
class RunConfig:
    """Knobs of a single run.  warp_size and num_warps default to the
    program's directives when left as None."""

    engine: str = "hanoi"
    warp_size: int | None = None
    num_warps: int | None = None
    step_budget: int = 1_000_000
    atomic_order: str = "asc"           # lane arbitration within atomics
    branch_tie: str = "taken"           # equal-split divergence winner
    simt_priority: str = "taken"        # baseline path priority
    trace_out: str | None = None
    dump_state: bool = False

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, "
                             f"not {self.engine!r}")
        if self.atomic_order not in ("asc", "desc"):
            raise ValueError("atomic_order must be asc or desc")
        if self.branch_tie not in ("taken", "not_taken"):
            raise ValueError("branch_tie must be taken or not_taken")
        if self.simt_priority not in ("taken", "not_taken", "majority"):
            raise ValueError("simt_priority must be taken, not_taken "
                             "or majority")
        if self.step_budget < 1:
            raise ValueError("step_budget must be positive")
        if self.warp_size is not None and not (
                WARP_SIZE_MIN <= self.warp_size <= WARP_SIZE_MAX):
            raise ValueError(f"warp_size must be {WARP_SIZE_MIN}.."
                             f"{WARP_SIZE_MAX}, not {self.warp_size}")
        if self.num_warps is not None and self.num_warps < 1:
            raise ValueError("num_warps must be at least 1")


class WarpOutcome(Enum):
    RUNNING = "running"
    FINISHED = "finished"
    DEADLOCK = "deadlock"
    BUDGET = "budget"
    FAULT = "fault"


# worst outcome decides the overall run result
_SEVERITY = [WarpOutcome.FINISHED, WarpOutcome.BUDGET, WarpOutcome.DEADLOCK,
             WarpOutcome.RUNNING, WarpOutcome.FAULT]


@dataclass
class Warp:
    warp_id: int
    state: WarpState
    cfu: HanoiCfu | SimtStackCfu
    outcome: WarpOutcome = WarpOutcome.RUNNING
    issued: int = 0
    fault: str | None = None


@dataclass
class SimResult:
    warps: list[Warp]
    events: list[TraceEvent] = field(default_factory=list)

    @property
    def outcome(self) -> WarpOutcome:
        return max((w.outcome for w in self.warps),
                   key=_SEVERITY.index)


class Simulation:
    """One launch of a program under one engine."""

    def __init__(self, program: Program, config: RunConfig | None = None):
        self.program = program
        self.config = config or RunConfig()
        self.warp_size = self.config.warp_size or program.warp_size
        self.num_warps = self.config.num_warps or program.num_warps
        if self.num_warps < 1:
            raise ValueError("num_warps must be at least 1")
        self.memory = SharedMemory(program.mem_words)
        self.events: list[TraceEvent] = []
        self.warps = [self._make_warp(i) for i in range(self.num_warps)]

    def _make_warp(self, warp_id: int) -> Warp:
        cfg = self.config
        if cfg.engine == "hanoi":
            cfu = HanoiCfu(self.warp_size, warp_id=warp_id,
                           branch_tie=cfg.branch_tie,
                           atomic_order=cfg.atomic_order)
        else:
            cfu = SimtStackCfu(self.program, warp_id=warp_id,
                               warp_size=self.warp_size,
                               priority=cfg.simt_priority,
                               branch_tie=cfg.branch_tie,
                               atomic_order=cfg.atomic_order)
        state = WarpState(warp_id, self.warp_size, self.memory)
        return Warp(warp_id, state, cfu)

    # ── stepping ────────────────────────────────────────────────────────

    def step_warp(self, warp: Warp) -> TraceEvent | None:
        """Issue at most one instruction; returns the traced event, or
        None when the warp reached a terminal state instead."""
        if warp.outcome is not WarpOutcome.RUNNING:
            return None
        res = warp.cfu.next_issue()
        if res is FINISHED:
            warp.outcome = WarpOutcome.FINISHED
            return None
        if res is BLOCKED:
            warp.outcome = WarpOutcome.DEADLOCK
            return None
        if warp.issued >= self.config.step_budget:
            warp.outcome = WarpOutcome.BUDGET
            return None
        pc, active = res.pc, res.active
        if not 0 <= pc < len(self.program):
            warp.outcome = WarpOutcome.FAULT
            warp.fault = f"pc {pc} outside the program (warp {warp.warp_id})"
            return None
        inst = self.program.instructions[pc]
        exec_mask = eval_guard(inst.guard, active, warp.state.pregs)
        event = TraceEvent(warp=warp.warp_id, seq=warp.issued, pc=pc,
                           op=inst.mnemonic, mask=str(active))
        warp.issued += 1
        self.events.append(event)
        try:
            warp.cfu.execute(inst, exec_mask, warp.state)
        except SimFault as exc:
            warp.outcome = WarpOutcome.FAULT
            warp.fault = str(exc)
            return event
        warp.cfu.check_invariants()
        return event

    def run(self) -> SimResult:
        """Round-robin all warps to completion (or fault)."""
        while True:
            progressed = False
            for warp in self.warps:
                if warp.outcome is not WarpOutcome.RUNNING:
                    continue
                self.step_warp(warp)
                if warp.outcome is WarpOutcome.FAULT:
                    return SimResult(self.warps, self.events)
                progressed = True
            if not progressed:
                return SimResult(self.warps, self.events)


def run_program(program: Program,
                config: RunConfig | None = None) -> SimResult:
    return Simulation(program, config).run()
