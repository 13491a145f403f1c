"""Issue traces: capture, serialization, comparison, storage accounting.

A trace is the per-warp sequence of issued instructions.  Two events
count as equal when they issue the same pc with the same active mask;
the recorded mnemonic is informative only.  Traces serialize one JSON
object per line:

    {"warp":0,"seq":12,"pc":24,"op":"BRA","mask":"1100"}

Masks are MSB-first strings, so lane 0 is the rightmost character.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

__all__ = [
    "TraceEvent",
    "TraceError",
    "write_trace",
    "read_trace",
    "by_warp",
    "levenshtein",
    "discrepancy_pct",
    "aggregate_discrepancy",
    "summarize",
    "storage_bits",
    "storage_bytes",
    "simt_storage_bytes",
    "storage_report",
]


@dataclass(frozen=True, slots=True)
class TraceEvent:
    warp: int
    seq: int
    pc: int
    op: str
    mask: str

    @property
    def key(self) -> tuple[int, str]:
        return (self.pc, self.mask)


class TraceError(ValueError):
    """Malformed trace file; message carries the line number."""


def write_trace(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            line = json.dumps({"warp": e.warp, "seq": e.seq, "pc": e.pc,
                               "op": e.op, "mask": e.mask},
                              separators=(",", ":"))
            fh.write(line + "\n")


def read_trace(path) -> list[TraceEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{line_no}: not JSON: {exc}") \
                    from None
            try:
                event = TraceEvent(warp=doc["warp"], seq=doc["seq"],
                                   pc=doc["pc"], op=doc["op"],
                                   mask=doc["mask"])
            except (KeyError, TypeError) as exc:
                raise TraceError(f"{path}:{line_no}: missing field: {exc}") \
                    from None
            if (not isinstance(event.pc, int) or event.pc < 0
                    or not isinstance(event.warp, int) or event.warp < 0
                    or not isinstance(event.seq, int) or event.seq < 0):
                raise TraceError(f"{path}:{line_no}: warp, seq and pc must "
                                 f"be non-negative integers")
            if (not isinstance(event.mask, str) or not event.mask
                    or set(event.mask) - {"0", "1"}):
                raise TraceError(f"{path}:{line_no}: mask must be a "
                                 f"non-empty string of 0/1")
            events.append(event)
    return events


def by_warp(events) -> dict[int, list[TraceEvent]]:
    grouped: dict[int, list[TraceEvent]] = {}
    for e in events:
        grouped.setdefault(e.warp, []).append(e)
    return grouped


# ── comparison ──────────────────────────────────────────────────────────

def _key(e):
    return e.key if isinstance(e, TraceEvent) else e


def levenshtein(a, b) -> int:
    """Edit distance between two event sequences, equality on (pc, mask)."""
    ka = [_key(e) for e in a]
    kb = [_key(e) for e in b]
    if len(ka) < len(kb):
        ka, kb = kb, ka
    if not kb:
        return len(ka)
    prev = list(range(len(kb) + 1))
    for i, x in enumerate(ka, start=1):
        cur = [i]
        for j, y in enumerate(kb, start=1):
            cost = 0 if x == y else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def discrepancy_pct(reference, candidate, denom: str = "ref") -> float:
    """Edit distance as a percentage of the reference length.

    denom="max" divides by the longer of the two sequences instead.
    """
    if denom not in ("ref", "max"):
        raise ValueError(f"denom must be ref or max, not {denom!r}")
    ref = list(reference)
    cand = list(candidate)
    base = len(ref) if denom == "ref" else max(len(ref), len(cand))
    if base == 0:
        if denom == "max":
            return 0.0
        raise ValueError("reference trace is empty")
    return 100.0 * levenshtein(ref, cand) / base


def aggregate_discrepancy(reference, candidate,
                          denom: str = "ref") -> tuple[dict[int, float], float]:
    """Per-warp discrepancy plus the event-weighted overall percentage."""
    if denom not in ("ref", "max"):
        raise ValueError(f"denom must be ref or max, not {denom!r}")
    ref_warps = by_warp(reference)
    cand_warps = by_warp(candidate)
    per_warp: dict[int, float] = {}
    total_dist = 0
    total_base = 0
    for warp in sorted(set(ref_warps) | set(cand_warps)):
        ref = ref_warps.get(warp, [])
        cand = cand_warps.get(warp, [])
        dist = levenshtein(ref, cand)
        base = len(ref) if denom == "ref" else max(len(ref), len(cand))
        total_dist += dist
        total_base += base
        per_warp[warp] = 100.0 * dist / base if base else float("inf")
    if total_base == 0:
        raise ValueError("reference trace is empty")
    return per_warp, 100.0 * total_dist / total_base


def summarize(events) -> dict[int, dict]:
    """Per-warp event count and SIMD utilization (mean active fraction)."""
    out: dict[int, dict] = {}
    for warp, evs in sorted(by_warp(events).items()):
        filled = sum(e.mask.count("1") / len(e.mask) for e in evs)
        out[warp] = {
            "events": len(evs),
            "simd_pct": 100.0 * filled / len(evs) if evs else 0.0,
        }
    return out


# ── storage accounting ──────────────────────────────────────────────────

def storage_bits(warp_size: int, nb_bregs: int = 8,
                 pc_bits: int = 32) -> dict[str, int]:
    """Bit cost of the barrier engine's per-warp state.

    WS holds warp_size entries of pc plus mask; REC holds warp_size - 1
    entries of pc plus a B register index; B registers hold one mask
    each; waiting and finished are one mask each.
    """
    if nb_bregs < 1 or nb_bregs & (nb_bregs - 1):
        raise ValueError(f"nb_bregs must be a power of two, got {nb_bregs}")
    index_bits = nb_bregs.bit_length() - 1
    ws = warp_size * (pc_bits + warp_size)
    rec = (warp_size - 1) * (pc_bits + index_bits)
    bregs = nb_bregs * warp_size
    masks = 2 * warp_size
    return {"ws": ws, "rec": rec, "bregs": bregs, "masks": masks,
            "total": ws + rec + bregs + masks}


def storage_bytes(warp_size: int, nb_bregs: int = 8,
                  pc_bits: int = 32) -> int:
    total = storage_bits(warp_size, nb_bregs, pc_bits)["total"]
    return (total + 7) // 8


def simt_storage_bytes(warp_size: int, pc_bits: int = 32) -> int:
    """Stack baseline sized at its worst-case depth of 2 x warp_size
    entries, each holding a pc, a reconvergence pc and a mask."""
    bits = 2 * warp_size * (2 * pc_bits + warp_size)
    return (bits + 7) // 8


def storage_report(warp_size: int, nb_bregs: int = 8,
                   pc_bits: int = 32) -> str:
    bits = storage_bits(warp_size, nb_bregs, pc_bits)
    total_bytes = storage_bytes(warp_size, nb_bregs, pc_bits)
    simt_bytes = simt_storage_bytes(warp_size, pc_bits)
    more = 100.0 * (simt_bytes - total_bytes) / total_bytes
    less = 100.0 * (simt_bytes - total_bytes) / simt_bytes
    lines = [
        f"per-warp storage, warp_size={warp_size} nb_bregs={nb_bregs} "
        f"pc_bits={pc_bits}",
        f"  WS stack     : {bits['ws']} bits",
        f"  REC stack    : {bits['rec']} bits",
        f"  B registers  : {bits['bregs']} bits",
        f"  wait/finish  : {bits['masks']} bits",
        f"  total        : {bits['total']} bits = {total_bytes} bytes",
        f"stack baseline at worst-case depth {2 * warp_size}: "
        f"{simt_bytes} bytes",
        f"  baseline needs {more:.1f}% more storage "
        f"({less:.1f}% saved by the barrier engine)",
    ]
    return "\n".join(lines)
