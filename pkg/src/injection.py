"""Single-event-upset injection and functional de-rating (FDR) estimation."""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Literal

import numpy as np
import pandas as pd
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import FdrGcnInputError, GuardExceededError, WorkloadError
from .netlist import Netlist
from .simulator import (
    CompiledCircuit,
    Trace,
    Workload,
    compile_circuit,
    golden_trace,
    simulate_lanes,
)
from .types import IntArray
from .workspace import read_csv_file

logger = get_logger(__name__)

EXHAUSTIVE_LIMIT = 10**6
LANE_CHUNK = 4096
FDR_COLUMNS = ["flipflop", "injections", "failures", "fdr"]


class InjectionResult(BaseModel):
    """Outcome of one upset: flip-flop ``flipflop`` inverted at cycle ``cycle``."""

    model_config = ConfigDict(frozen=True)

    flipflop: str
    cycle: int = Field(ge=0)
    failed: bool
    first_failure_cycle: int | None = None


class FdrEntry(BaseModel):
    """FDR of one flip-flop."""

    model_config = ConfigDict(frozen=True)

    flipflop: str
    injections: int = Field(ge=0)
    failures: int = Field(ge=0)
    fdr: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_counts(self) -> "FdrEntry":
        """Validate failures against injections."""
        if self.failures > self.injections:
            raise ValueError(
                f"{self.flipflop}: {self.failures} failures exceed {self.injections} injections"
            )
        return self


class FdrTable(BaseModel):
    """Per flip-flop FDR values, simulated or predicted, in netlist order."""

    model_config = ConfigDict(frozen=True)

    source: Literal["simulated", "predicted"]
    entries: List[FdrEntry]

    @model_validator(mode="after")
    def validate_entries(self) -> "FdrTable":
        """Validate names and, for simulated tables, count consistency."""
        names = [e.flipflop for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate flip-flop in FDR table")
        if self.source == "simulated":
            for e in self.entries:
                if e.injections == 0:
                    raise ValueError(f"{e.flipflop}: simulated entry without injections")
                if abs(e.fdr - e.failures / e.injections) > 1e-9:
                    raise ValueError(f"{e.flipflop}: fdr {e.fdr} inconsistent with counts")
        return self

    @property
    def flipflops(self) -> List[str]:
        return [e.flipflop for e in self.entries]

    def as_dict(self) -> Dict[str, float]:
        return {e.flipflop: e.fdr for e in self.entries}

    def values(self) -> List[float]:
        return [e.fdr for e in self.entries]


def _simulated_entry(flipflop: str, injections: int, failures: int) -> FdrEntry:
    return FdrEntry(
        flipflop=flipflop,
        injections=injections,
        failures=failures,
        fdr=failures / injections,
    )


def inject_seu(n: Netlist, w: Workload, ff: str, t: int) -> InjectionResult:
    """Invert ``ff`` at the start of cycle ``t`` and compare against the golden run.

    Raises:
        WorkloadError: If ``ff`` is not a flip-flop or ``t`` is out of range
    """
    circuit = compile_circuit(n)
    if ff not in circuit.flipflops:
        raise WorkloadError(f"unknown flip-flop '{ff}'")
    if not 0 <= t < w.n_cycles:
        raise WorkloadError(f"cycle {t} out of range 0..{w.n_cycles - 1}")
    golden = golden_trace(circuit, w)
    first = simulate_lanes(
        circuit,
        w,
        golden,
        np.array([circuit.flipflops.index(ff)], dtype=np.int64),
        np.array([t], dtype=np.int64),
    )[0]
    return InjectionResult(
        flipflop=ff,
        cycle=t,
        failed=bool(first >= 0),
        first_failure_cycle=int(first) if first >= 0 else None,
    )


def _count_failures(
    circuit: CompiledCircuit,
    w: Workload,
    golden: Trace,
    ff_lanes: IntArray,
    cycle_lanes: IntArray,
    workers: int,
) -> IntArray:
    """Failures per flip-flop over all lanes, simulated in chunks."""
    chunks = [
        (ff_lanes[i : i + LANE_CHUNK], cycle_lanes[i : i + LANE_CHUNK])
        for i in range(0, ff_lanes.size, LANE_CHUNK)
    ]

    def run(chunk: tuple[IntArray, IntArray]) -> IntArray:
        ffs, cycles = chunk
        failed = simulate_lanes(circuit, w, golden, ffs, cycles) >= 0
        return np.bincount(ffs[failed], minlength=circuit.n_flipflops)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(run, chunks))
    else:
        partial = [run(chunk) for chunk in chunks]
    total = np.zeros(circuit.n_flipflops, dtype=np.int64)
    for counts in partial:
        total += counts
    return total


def _table(circuit: CompiledCircuit, injections: IntArray, failures: IntArray) -> FdrTable:
    return FdrTable(
        source="simulated",
        entries=[
            _simulated_entry(ff, int(injections[i]), int(failures[i]))
            for i, ff in enumerate(circuit.flipflops)
        ],
    )


def run_campaign(
    n: Netlist,
    w: Workload,
    injections_per_ff: int,
    seed: int,
    workers: int = 1,
) -> FdrTable:
    """Sampled fault injection campaign.

    Every flip-flop gets ``injections_per_ff`` distinct injection cycles drawn
    uniformly from its own seeded stream; when that covers the workload, all
    cycles are injected once. The FDR is the failure fraction.
    """
    if injections_per_ff < 1:
        raise WorkloadError("injections_per_ff must be at least 1")
    circuit = compile_circuit(n)
    golden = golden_trace(circuit, w)

    ff_lanes: List[IntArray] = []
    cycle_lanes: List[IntArray] = []
    for i in range(circuit.n_flipflops):
        if injections_per_ff >= w.n_cycles:
            cycles = np.arange(w.n_cycles, dtype=np.int64)
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            cycles = np.sort(rng.choice(w.n_cycles, size=injections_per_ff, replace=False))
        ff_lanes.append(np.full(cycles.size, i, dtype=np.int64))
        cycle_lanes.append(cycles.astype(np.int64))

    ffs = np.concatenate(ff_lanes) if ff_lanes else np.zeros(0, dtype=np.int64)
    cycles = np.concatenate(cycle_lanes) if cycle_lanes else np.zeros(0, dtype=np.int64)
    failures = _count_failures(circuit, w, golden, ffs, cycles, workers)
    injections = np.bincount(ffs, minlength=circuit.n_flipflops)

    logger.info(
        f"Campaign on {n.name}: {ffs.size} injections",
        extra={"circuit": n.name, "injections": int(ffs.size), "seed": seed},
    )
    return _table(circuit, injections, failures)


def exhaustive_fdr(n: Netlist, w: Workload, limit: int = EXHAUSTIVE_LIMIT) -> FdrTable:
    """Inject every (flip-flop, cycle) pair exactly once.

    Raises:
        GuardExceededError: If more than ``limit`` injections would be needed
    """
    requested = len(n.flipflops) * w.n_cycles
    if requested > limit:
        logger.error(
            f"Exhaustive campaign refused: {requested} injections exceed {limit}",
            extra={"circuit": n.name, "requested": requested, "limit": limit},
        )
        raise GuardExceededError(
            f"exhaustive campaign needs {requested} injections, limit is {limit}",
            requested=requested,
            limit=limit,
        )
    circuit = compile_circuit(n)
    golden = golden_trace(circuit, w)
    ffs = np.repeat(np.arange(circuit.n_flipflops, dtype=np.int64), w.n_cycles)
    cycles = np.tile(np.arange(w.n_cycles, dtype=np.int64), circuit.n_flipflops)
    failures = _count_failures(circuit, w, golden, ffs, cycles, workers=1)
    injections = np.full(circuit.n_flipflops, w.n_cycles, dtype=np.int64)
    logger.info(
        f"Exhaustive campaign on {n.name}: {requested} injections",
        extra={"circuit": n.name, "injections": requested},
    )
    return _table(circuit, injections, failures)


def write_fdr_csv(table: FdrTable, path: Path) -> None:
    """Write ``flipflop,injections,failures,fdr`` rows in table order."""
    frame = pd.DataFrame(
        [[e.flipflop, e.injections, e.failures, e.fdr] for e in table.entries],
        columns=FDR_COLUMNS,
    )
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")


def read_fdr_csv(path: Path, source: Literal["simulated", "predicted"]) -> FdrTable:
    """Read an FDR CSV; simulated FDRs are recomputed from their counts."""
    frame = read_csv_file(path, FdrGcnInputError, dtype={"flipflop": str})
    if list(frame.columns) != FDR_COLUMNS:
        raise FdrGcnInputError(f"{path}: expected header {','.join(FDR_COLUMNS)}")
    entries: List[FdrEntry] = []
    try:
        for row in frame.itertuples(index=False):
            injections, failures = int(row.injections), int(row.failures)
            if source == "simulated":
                entries.append(_simulated_entry(str(row.flipflop), injections, failures))
            else:
                entries.append(
                    FdrEntry(
                        flipflop=str(row.flipflop),
                        injections=injections,
                        failures=failures,
                        fdr=float(row.fdr),
                    )
                )
        return FdrTable(source=source, entries=entries)
    except (ValidationError, ValueError, ZeroDivisionError) as e:
        raise FdrGcnInputError(f"{path}: invalid FDR table: {e}")
