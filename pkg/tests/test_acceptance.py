"""Release gate: eight end-to-end checks, one pass/fail line each.

Every test below guards one externally visible promise of the package —
exact replay of the bundled barrier walkthroughs, the yield-dependent
spinlock outcomes, golden-trace diffs at exactly zero, the storage
accounting numbers, engine equivalence on random structured programs,
structural invariants, and the guarded-EXIT / WARPSYNC terminations.
The conftest terminal-summary hook turns each result into an
`[ACCEPTANCE n] PASS|FAIL` line; the checks with wall-clock budgets
enforce them with `_budget`.
"""

import json
import random
import time

from conftest import PROGRAMS, config_for
from generator import filtered_keys, ipdom_oracle, random_program, run_both
from hanoisim import (
    RunConfig,
    Simulation,
    ThreadMask,
    WarpOutcome,
    assemble,
    build_cfg,
    compute_ipdom,
    levenshtein,
    read_trace,
    run_program,
    storage_bytes,
    write_trace,
)
from hanoisim.cli import main as cli_main
from hanoisim.trace_tools import simt_storage_bytes

ENTRIES = json.loads((PROGRAMS / "manifest.json").read_text(encoding="utf-8"))["programs"]

DESCRIPTIONS = {
    1: "nested-barrier replay hits every checkpoint and final state",
    2: "early BREAK shrinks B0 and the warp still reunites",
    3: "spinlock needs both YIELD and the barrier engine to finish",
    4: "golden diffs report exactly 0.0% and the metric obeys its laws",
    5: "storage accounting: 432 bytes at warp 32, stack baseline >=40% more",
    6: "barrier engine matches the stack baseline on 1,000 random programs",
    7: "partition/B-register invariants, depth bounds and determinism",
    8: "guarded EXIT and WARPSYNC subsets terminate with all lanes finished",
}


def _budget(start: float, limit: float) -> None:
    elapsed = time.perf_counter() - start
    assert elapsed < limit, f"took {elapsed:.2f}s, budget {limit}s"


def _load(name: str):
    text = (PROGRAMS / name).read_text(encoding="utf-8")
    return assemble(text, source_name=name)


def _step_recording(name: str, config: RunConfig | None = None):
    """Run one warp to completion, recording (event, B0 bits, B0 valid,
    lane values of R0) after every issued instruction."""
    program = _load(name)
    sim = Simulation(program, config or RunConfig())
    warp = sim.warps[0]
    snaps = []
    while True:
        ev = sim.step_warp(warp)
        if ev is None:
            break
        b0 = warp.cfu.bregs[0]
        r0 = tuple(warp.state.rregs[lane][0] for lane in range(sim.warp_size))
        snaps.append((ev, b0.mask_bits, bool(b0.valid), r0))
    return warp, sim.events, snaps


def _first_at(events, pc: int) -> int:
    return next(i for i, e in enumerate(events) if e.pc == pc)


FIG5_FINAL_DUMP = """\
WS stack (top first):
  (empty)
REC stack (top first):
  (empty)
B registers:
  B0 V=0 mask=0000
  B1 V=0 mask=0000
  B2 V=0 mask=0000
  B3 V=0 mask=0000
  B4 V=0 mask=0000
  B5 V=0 mask=0000
  B6 V=0 mask=0000
  B7 V=0 mask=0000
waiting : 0000
finished: 1111"""


def test_acceptance_1_nested_replay():
    start = time.perf_counter()
    warp, events, snaps = _step_recording("fig5_nested.asm")
    assert warp.outcome is WarpOutcome.FINISHED

    # outer BSSY arms B0 with the whole warp
    ev, bits, valid, _ = snaps[_first_at(events, 1)]
    assert ev.op == "BSSY" and (bits, valid) == (0b1111, True)

    # BMOV spills that mask to R0 in every lane and invalidates B0
    ev, bits, valid, r0 = snaps[_first_at(events, 2)]
    assert ev.op == "BMOV" and r0 == (0b1111,) * 4 and not valid

    # inner BSSY re-arms B0 for lanes 2,3 only
    ev, bits, valid, _ = snaps[_first_at(events, 7)]
    assert ev.op == "BSSY" and (bits, valid) == (0b1100, True)

    # lanes 2 and 3 park separately, then reunite at the inner join
    join = _first_at(events, 14)
    assert [e.mask for e in events[:join] if e.pc == 13] == ["1000", "0100"]
    assert events[join].mask == "1100"

    # the restore runs before the outer BSYNC: B0 holds 1111 again
    restore = _first_at(events, 15)
    _, bits, valid, _ = snaps[restore]
    assert (bits, valid) == (0b1111, True)
    assert events[restore + 1].pc == 16  # outer BSYNC comes next

    # the whole warp reunites for the exit
    assert (events[-1].pc, events[-1].op, events[-1].mask) == (17, "EXIT", "1111")
    assert warp.cfu.dump() == FIG5_FINAL_DUMP
    _budget(start, 1.0)


def test_acceptance_2_early_break_replay():
    start = time.perf_counter()
    warp, events, snaps = _step_recording("fig6_early_break.asm")
    assert warp.outcome is WarpOutcome.FINISHED

    # BREAK (lane 0 only) edits B0 from 1111 down to 1110 in place
    idx = next(i for i, e in enumerate(events) if e.op == "BREAK")
    assert events[idx].mask == "0001"
    assert snaps[idx - 1][1:3] == (0b1111, True)
    assert snaps[idx][1:3] == (0b1110, True)

    # lanes 1,2,3 reconverge right after the inner barrier without lane 0
    assert events[_first_at(events, 11)].mask == "1110"

    # lane 0 rejoins at the outer barrier; the warp exits intact
    assert events[_first_at(events, 14)].mask == "1111"
    assert (events[-1].op, events[-1].mask) == ("EXIT", "1111")
    assert cli_main(["run", str(PROGRAMS / "fig6_early_break.asm")]) == 0
    _budget(start, 1.0)


def test_acceptance_3_spinlock_needs_yield():
    start = time.perf_counter()
    spin = str(PROGRAMS / "fig7_spinlock.asm")
    noyield = str(PROGRAMS / "fig7_spinlock_noyield.asm")
    assert cli_main(["run", spin, "--atomic-order", "desc"]) == 0
    assert cli_main(["run", noyield, "--atomic-order", "desc",
                     "--step-budget", "20000"]) in (3, 4)
    assert cli_main(["run", spin, "--engine", "simtstack",
                     "--atomic-order", "desc",
                     "--step-budget", "20000"]) in (3, 4)
    _budget(start, 5.0)


def test_acceptance_4_trace_diff_oracle(tmp_path, capsys):
    start = time.perf_counter()
    # every bundled golden diffs against a fresh run at exactly 0.0%
    for entry in ENTRIES:
        if not entry["golden"]:
            continue
        fresh = tmp_path / (entry["name"] + ".trace")
        assert cli_main(["run", str(PROGRAMS / entry["asm"]),
                         "--engine", entry["engine"],
                         "--atomic-order", entry["atomic_order"],
                         "--trace-out", str(fresh)]) == 0
        capsys.readouterr()
        assert cli_main(["diff", str(PROGRAMS / entry["golden"]),
                         str(fresh)]) == 0
        assert "overall: 0.0000%" in capsys.readouterr().out

    # metric laws on 10,000 random sequence pairs
    rng = random.Random(4)
    alphabet = [(pc, mask) for pc in range(6)
                for mask in ("1111", "1100", "0011", "0001")]

    def seq():
        return [rng.choice(alphabet) for _ in range(rng.randint(0, 12))]

    for _ in range(10_000):
        a, b, c = seq(), seq(), seq()
        d_ab = levenshtein(a, b)
        assert levenshtein(a, a) == 0                         # identity
        assert d_ab == levenshtein(b, a)                      # symmetry
        assert levenshtein(a, c) <= d_ab + levenshtein(b, c)  # triangle
    _budget(start, 30.0)


def test_acceptance_5_storage_accounting():
    hanoi = storage_bytes(32, 8, 32)
    assert hanoi == 432
    baseline = simt_storage_bytes(32, 32)
    assert baseline >= 1.4 * hanoi


def test_acceptance_6_engine_equivalence():
    start = time.perf_counter()
    for seed in range(6000, 7000):
        program = random_program(seed)
        barrier, stack = run_both(program)
        assert barrier.warps[0].outcome is WarpOutcome.FINISHED, seed
        assert stack.warps[0].outcome is WarpOutcome.FINISHED, seed
        assert filtered_keys(barrier.events) == filtered_keys(stack.events), seed
        assert compute_ipdom(build_cfg(program), len(program)) \
            == ipdom_oracle(program), seed
    _budget(start, 120.0)


def _trace_bytes(events, path):
    write_trace(events, path)
    return path.read_bytes()


def test_acceptance_7_invariants(tmp_path):
    start = time.perf_counter()
    runs = []
    for entry in ENTRIES:
        overrides = {} if entry["expected_exit"] == [0] else {"step_budget": 2000}
        runs.append((entry["name"], _load(entry["asm"]),
                     config_for(entry, **overrides)))
    for seed in range(7000, 7150):
        runs.append((f"fuzz{seed}", random_program(seed), RunConfig()))

    for name, program, config in runs:
        first = run_program(program, config)
        for warp in first.warps:
            assert warp.outcome is not WarpOutcome.FAULT, name
            cfu = warp.cfu
            if not hasattr(cfu, "ws"):
                continue
            # partition and valid-B checks (also enforced every step)
            cfu.check_invariants()
            assert cfu.max_ws_depth <= cfu.warp_size, name
            assert cfu.max_rec_depth <= cfu.warp_size - 1, name
        second = run_program(program, config)
        assert _trace_bytes(first.events, tmp_path / "a.trace") \
            == _trace_bytes(second.events, tmp_path / "b.trace"), name
    _budget(start, 120.0)


def test_acceptance_8_guarded_exit_and_subset_sync():
    start = time.perf_counter()
    for name in ("predicated_exit", "warpsync_subsets"):
        entry = next(e for e in ENTRIES if e["name"] == name)
        program = _load(entry["asm"])
        result = run_program(program, config_for(entry))
        warp = result.warps[0]
        assert warp.outcome is WarpOutcome.FINISHED
        assert warp.cfu.finished == ThreadMask.full(program.warp_size)
        assert result.events == read_trace(PROGRAMS / entry["golden"])
    _budget(start, 1.0)
