"""Functional simulator for warp-level control flow.

Two interchangeable per-warp engines run the same miniature SASS-style
ISA: a barrier engine built on explicit reconvergence state (BSSY, BSYNC,
BMOV, BREAK, WARPSYNC, YIELD) and a classic stack baseline that
reconverges at immediate post-dominators.  Traces of issued instructions
can be captured, serialized and compared.
"""

from .asm import AsmError, Program, assemble, assemble_file, build_cfg, \
    pretty_print
from .hanoi_cfu import HanoiCfu
from .isa import Instruction, Opcode, ThreadMask, eval_guard, \
    mask_to_string, string_to_mask
from .machine import SharedMemory, SimFault, WarpState
from .sim import RunConfig, SimResult, Simulation, WarpOutcome, run_program
from .simt_stack_cfu import SimtStackCfu, compute_ipdom
from .trace_tools import TraceEvent, aggregate_discrepancy, \
    discrepancy_pct, levenshtein, read_trace, storage_bytes, write_trace

__version__ = "0.1.0"

__all__ = [
    "AsmError", "Program", "assemble", "assemble_file", "build_cfg",
    "pretty_print", "HanoiCfu", "Instruction", "Opcode", "ThreadMask",
    "eval_guard", "mask_to_string", "string_to_mask", "SharedMemory",
    "SimFault", "WarpState", "RunConfig", "SimResult", "Simulation",
    "WarpOutcome", "run_program", "SimtStackCfu", "compute_ipdom",
    "TraceEvent", "aggregate_discrepancy", "discrepancy_pct",
    "levenshtein", "read_trace", "storage_bytes", "write_trace",
    "__version__",
]
