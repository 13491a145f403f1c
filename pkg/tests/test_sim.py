"""Run driver: round-robin scheduling, multi-warp memory, outcomes."""

import pytest

from hanoisim import RunConfig, WarpOutcome, assemble, run_program
from hanoisim.sim import SimResult, Warp

TWO_INDEPENDENT = """\
.warpsize 4
.warps 2
    S2R R1, SR_TID
    ISETP.LT P0, R1, #2
    BSSY B0, SYNC
    @P0 BRA PB
    IADD R2, R1, #200
    BRA SYNC
PB:
    IADD R2, R1, #100
SYNC:
    BSYNC B0
    EXIT
"""

# Warp 0 publishes a flag through shared memory; warp 1 spins on it.
# Round-robin interleaving makes the handoff deterministic: warp 1's
# first load (its 5th issue) happens one round before warp 0's store,
# so the consumer takes exactly one extra lap around the spin loop.
PRODUCER_CONSUMER = """\
.warpsize 2
.warps 2
.mem 1
    S2R R1, SR_WARPID
    ISETP.GE P0, R1, #1
    @P0 BRA CONSUMER
    MOV R2, #1
    MOV R4, #0
    ST R4, R2
    EXIT
CONSUMER:
    MOV R4, #0
SPIN:
    LD R3, R4
    ISETP.EQ P1, R3, #0
    @P1 BRA SPIN
    EXIT
"""


def test_independent_warps_interleave_and_match_single_warp():
    program = assemble(TWO_INDEPENDENT)
    result = run_program(program)
    assert result.outcome is WarpOutcome.FINISHED
    assert [w.outcome for w in result.warps] == [WarpOutcome.FINISHED] * 2

    single = run_program(assemble(TWO_INDEPENDENT.replace(".warps 2\n", "")))
    stripped = [(e.seq, e.pc, e.op, e.mask) for e in single.events]
    for warp_id in (0, 1):
        mine = [(e.seq, e.pc, e.op, e.mask)
                for e in result.events if e.warp == warp_id]
        assert mine == stripped

    # identical independent warps alternate strictly, warp 0 first
    assert [e.warp for e in result.events] == [0, 1] * len(single.events)


def test_producer_consumer_handoff():
    program = assemble(PRODUCER_CONSUMER)
    result = run_program(program)
    assert [w.outcome for w in result.warps] == [WarpOutcome.FINISHED] * 2
    expected = [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2),
                (0, 3), (1, 7), (0, 4), (1, 8), (0, 5), (1, 9),
                (0, 6), (1, 10), (1, 8), (1, 9), (1, 10), (1, 11)]
    assert [(e.warp, e.pc) for e in result.events] == expected
    assert (result.warps[0].issued, result.warps[1].issued) == (7, 11)
    # the consumer ends holding the published value in both lanes
    assert [regs[3] for regs in result.warps[1].state.rregs] == [1, 1]


def test_producer_consumer_is_deterministic():
    program = assemble(PRODUCER_CONSUMER)
    assert run_program(program).events == run_program(program).events


def test_overall_outcome_is_the_worst_warp():
    def res(*outcomes):
        return SimResult([Warp(i, None, None, outcome=o)
                          for i, o in enumerate(outcomes)])

    assert res(WarpOutcome.FINISHED).outcome is WarpOutcome.FINISHED
    assert res(WarpOutcome.FINISHED, WarpOutcome.BUDGET).outcome \
        is WarpOutcome.BUDGET
    assert res(WarpOutcome.DEADLOCK, WarpOutcome.BUDGET).outcome \
        is WarpOutcome.DEADLOCK
    assert res(WarpOutcome.DEADLOCK, WarpOutcome.FAULT).outcome \
        is WarpOutcome.FAULT


def test_warp_size_override_widens_the_masks():
    program = assemble(TWO_INDEPENDENT.replace(".warps 2\n", ""))
    result = run_program(program, RunConfig(warp_size=8))
    assert result.outcome is WarpOutcome.FINISHED
    assert result.events[0].mask == "11111111"


@pytest.mark.parametrize("kwargs", [
    {"warp_size": 1},
    {"warp_size": 33},
    {"num_warps": 0},
])
def test_config_rejects_bad_overrides(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)
