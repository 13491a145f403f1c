"""Trace files, edit-distance comparison, storage accounting."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hanoisim.trace_tools import (
    TraceError,
    TraceEvent,
    aggregate_discrepancy,
    by_warp,
    discrepancy_pct,
    levenshtein,
    read_trace,
    simt_storage_bytes,
    storage_bits,
    storage_bytes,
    storage_report,
    summarize,
    write_trace,
)


def ev(pc, mask="1111", warp=0, seq=0, op="NOP"):
    return TraceEvent(warp=warp, seq=seq, pc=pc, op=op, mask=mask)


def lev_reference(a, b):
    """Full-matrix edit distance used as the oracle for the two-row
    implementation under test."""
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + cost)
    return d[m][n]


# ── trace files ─────────────────────────────────────────────────────────

def test_exact_line_format(tmp_path):
    path = tmp_path / "one.trace"
    write_trace([ev(24, mask="1100", seq=12, op="BRA")], path)
    assert path.read_text(encoding="utf-8") \
        == '{"warp":0,"seq":12,"pc":24,"op":"BRA","mask":"1100"}\n'


def test_write_read_round_trip(tmp_path):
    events = [ev(i, seq=i, op="IADD") for i in range(5)]
    path = tmp_path / "t.trace"
    write_trace(events, path)
    assert read_trace(path) == events


def test_read_skips_blank_lines(tmp_path):
    path = tmp_path / "t.trace"
    path.write_text('{"warp":0,"seq":0,"pc":1,"op":"NOP","mask":"11"}\n\n',
                    encoding="utf-8")
    assert len(read_trace(path)) == 1


@pytest.mark.parametrize("line,fragment", [
    ("not json at all", "not JSON"),
    ('{"warp":0,"seq":0,"pc":1}', "missing field"),
    ('{"warp":0,"seq":0,"pc":-1,"op":"NOP","mask":"11"}', "non-negative"),
    ('{"warp":0,"seq":0,"pc":1,"op":"NOP","mask":"12"}', "mask"),
    ('{"warp":0,"seq":0,"pc":1,"op":"NOP","mask":""}', "mask"),
])
def test_read_rejects_malformed_lines(tmp_path, line, fragment):
    path = tmp_path / "bad.trace"
    path.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(TraceError) as err:
        read_trace(path)
    assert fragment in str(err.value)
    assert ":1:" in str(err.value)      # message carries the line number


def test_by_warp_groups_in_order():
    events = [ev(0, warp=1), ev(1, warp=0), ev(2, warp=1)]
    grouped = by_warp(events)
    assert [e.pc for e in grouped[1]] == [0, 2]
    assert [e.pc for e in grouped[0]] == [1]


# ── edit distance ───────────────────────────────────────────────────────

def test_levenshtein_basics():
    a = [ev(i) for i in range(5)]
    assert levenshtein(a, a) == 0
    assert levenshtein(a, a[:4]) == 1               # one deletion
    assert levenshtein(a, a[:2] + a[3:]) == 1
    b = a[:2] + [ev(99)] + a[3:]                    # one substitution
    assert levenshtein(a, b) == 1
    assert levenshtein([], a) == 5


def test_levenshtein_compares_pc_and_mask_only():
    # op and seq are bookkeeping; identity is (pc, mask)
    assert levenshtein([ev(3, op="BRA", seq=0)],
                       [ev(3, op="IADD", seq=9)]) == 0
    assert levenshtein([ev(3, mask="1100")], [ev(3, mask="0011")]) == 1


keys = st.lists(st.sampled_from("abcd"), max_size=8)


@given(keys, keys)
def test_levenshtein_matches_full_matrix(a, b):
    assert levenshtein(a, b) == lev_reference(a, b)


@given(keys, keys, keys)
def test_levenshtein_metric_laws(a, b, c):
    assert levenshtein(a, a) == 0
    assert levenshtein(a, b) == levenshtein(b, a)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


# ── discrepancy percentages ─────────────────────────────────────────────

def test_discrepancy_extra_event_is_ten_percent_of_ten():
    ref = [ev(i) for i in range(10)]
    cand = ref + [ev(99)]
    assert discrepancy_pct(ref, cand) == 10.0


def test_discrepancy_denominators():
    ref = [ev(i) for i in range(4)]
    cand = [ev(i) for i in range(8)]
    assert discrepancy_pct(ref, cand, denom="ref") == 100.0
    assert discrepancy_pct(ref, cand, denom="max") == 50.0
    with pytest.raises(ValueError):
        discrepancy_pct(ref, cand, denom="median")


def test_discrepancy_empty_reference():
    with pytest.raises(ValueError):
        discrepancy_pct([], [ev(1)])
    assert discrepancy_pct([], [], denom="max") == 0.0


def test_aggregate_is_event_weighted():
    ref = [ev(i, warp=0, seq=i) for i in range(10)] \
        + [ev(i, warp=1, seq=i) for i in range(30)]
    cand = [e for e in ref]
    cand[0] = ev(99, warp=0, seq=0)         # one substitution in warp 0
    per_warp, overall = aggregate_discrepancy(ref, cand)
    assert per_warp == {0: 10.0, 1: 0.0}
    assert overall == pytest.approx(2.5)    # 1 edit over 40 events


def test_summarize():
    events = [ev(0, mask="1111"), ev(1, mask="1100")]
    stats = summarize(events)
    assert stats[0]["events"] == 2
    assert stats[0]["simd_pct"] == pytest.approx(75.0)


# ── storage accounting ──────────────────────────────────────────────────

def test_storage_bits_breakdown_at_full_width():
    bits = storage_bits(32, 8, 32)
    assert bits == {"ws": 32 * 64, "rec": 31 * 35, "bregs": 256,
                    "masks": 64, "total": 3453}
    assert storage_bytes(32, 8, 32) == 432


def test_storage_bytes_toy_config():
    assert storage_bits(4, 8, 32)["total"] == 289
    assert storage_bytes(4, 8, 32) == 37


def test_storage_requires_power_of_two_bregs():
    with pytest.raises(ValueError):
        storage_bits(32, nb_bregs=6)


def test_baseline_costs_more():
    assert simt_storage_bytes(32, 32) == 768
    hanoi = storage_bytes(32, 8, 32)
    baseline = simt_storage_bytes(32, 32)
    assert 100.0 * (baseline - hanoi) / hanoi >= 40.0


def test_storage_report_text():
    report = storage_report(32, 8, 32)
    assert "432 bytes" in report
    assert "768 bytes" in report
    assert "77.8% more storage" in report
    assert "43.8% saved" in report
