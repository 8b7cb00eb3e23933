"""Cycle-accurate, bit-parallel logic simulation of elaborated netlists.

Every net holds a row of boolean *lanes*; each lane is an independent
simulation of the same circuit. The golden run uses one lane, a fault
campaign packs one injection per lane.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np
from fastmcp.utilities.logging import get_logger

from .exceptions import CombinationalLoopError, WorkloadError
from .netlist import CellKind, Netlist
from .types import BoolArray, FlipList, IntArray
from .workspace import read_text_file

logger = get_logger(__name__)


@dataclass(frozen=True)
class Workload:
    """Stimulus and observation set of a simulation run.

    ``stimulus[t, i]`` is the value of data input ``inputs[i]`` in cycle t.
    """

    n_cycles: int
    inputs: Tuple[str, ...]
    stimulus: np.ndarray
    observed_outputs: Tuple[str, ...]
    initial_state: Tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_cycles < 1:
            raise WorkloadError("workload needs at least one cycle")
        if self.stimulus.shape != (self.n_cycles, len(self.inputs)):
            raise WorkloadError(
                f"stimulus shape {self.stimulus.shape} does not cover "
                f"{len(self.inputs)} inputs for {self.n_cycles} cycles"
            )
        if np.any(self.stimulus > 1):
            raise WorkloadError("stimulus values must be 0 or 1")


@dataclass(frozen=True)
class Trace:
    """Per-cycle values of every net: ``values[t, k]`` is net ``nets[k]`` in cycle t."""

    nets: Tuple[str, ...]
    values: BoolArray
    _index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self._index.update({net: k for k, net in enumerate(self.nets)})

    def net(self, name: str) -> List[int]:
        return [int(v) for v in self.values[:, self._index[name]]]


def _eval_cell(
    kind: CellKind, a: BoolArray, b: BoolArray | None, s: BoolArray | None
) -> BoolArray:
    match kind:
        case CellKind.AND2:
            return a & b
        case CellKind.OR2:
            return a | b
        case CellKind.NAND2:
            return ~(a & b)
        case CellKind.NOR2:
            return ~(a | b)
        case CellKind.XOR2:
            return a ^ b
        case CellKind.XNOR2:
            return ~(a ^ b)
        case CellKind.NOT:
            return ~a
        case CellKind.BUF:
            return a.copy()
        case CellKind.MUX2:
            return np.where(s, b, a)
        case _:
            raise ValueError(f"{kind} is not combinational")


class CompiledCircuit:
    """A netlist lowered to net indices and a topologically ordered op list.

    Raises:
        CombinationalLoopError: If the combinational cells form a cycle
    """

    def __init__(self, n: Netlist):
        self.name = n.name
        self.nets: Tuple[str, ...] = tuple(n.nets)
        self.net_index = {net: k for k, net in enumerate(self.nets)}
        self.inputs: Tuple[str, ...] = tuple(n.data_inputs)
        self.outputs: Tuple[str, ...] = tuple(n.outputs)
        self.flipflops: Tuple[str, ...] = tuple(n.flipflops)
        self.input_idx = np.array([self.net_index[p] for p in self.inputs], dtype=np.int64)

        dffs = {c.name: c for c in n.cells if c.kind.is_sequential}
        self.ff_q = np.array(
            [self.net_index[dffs[f].output_net] for f in self.flipflops], dtype=np.int64
        )
        self.ff_d = np.array(
            [self.net_index[dffs[f].pins["D"]] for f in self.flipflops], dtype=np.int64
        )

        comb = [c for c in n.cells if not c.kind.is_sequential]
        order = {c.name: i for i, c in enumerate(comb)}
        driver = {c.output_net: c.name for c in comb}
        deps: nx.DiGraph = nx.DiGraph()
        deps.add_nodes_from(order)
        for c in comb:
            for pin in c.kind.inputs:
                upstream = driver.get(c.pins[pin])
                if upstream is not None:
                    deps.add_edge(upstream, c.name)
        try:
            ordered = list(nx.lexicographical_topological_sort(deps, key=order.__getitem__))
        except nx.NetworkXUnfeasible:
            loop = [driver_cell for driver_cell, _ in nx.find_cycle(deps)]
            nets = [n.cell(name).output_net for name in loop]
            raise CombinationalLoopError(
                f"combinational loop through nets {' -> '.join(nets)}", cycle=nets
            )

        by_name = {c.name: c for c in comb}
        self.ops: List[Tuple[CellKind, int, Tuple[int, ...]]] = []
        for name in ordered:
            c = by_name[name]
            ins = tuple(self.net_index[c.pins[pin]] for pin in c.kind.inputs)
            self.ops.append((c.kind, self.net_index[c.output_net], ins))

    @property
    def n_flipflops(self) -> int:
        return len(self.flipflops)

    def output_indices(self, names: Sequence[str]) -> IntArray:
        return np.array([self.net_index[p] for p in names], dtype=np.int64)

    def evaluate(self, values: BoolArray, state: BoolArray, inputs: np.ndarray) -> None:
        """One cycle of combinational evaluation, in place.

        ``values`` is (nets x lanes), ``state`` is (flip-flops x lanes).
        """
        values[self.ff_q] = state
        values[self.input_idx] = inputs.astype(np.bool_)[:, None]
        for kind, out, ins in self.ops:
            a = values[ins[0]]
            b = values[ins[1]] if len(ins) > 1 else None
            s = values[ins[2]] if len(ins) > 2 else None
            values[out] = _eval_cell(kind, a, b, s)

    def next_state(self, values: BoolArray) -> BoolArray:
        return values[self.ff_d].copy()


def compile_circuit(n: Netlist) -> CompiledCircuit:
    """Lower a netlist for simulation."""
    return CompiledCircuit(n)


def check_workload(circuit: CompiledCircuit, w: Workload) -> None:
    """Raise WorkloadError unless ``w`` fits the circuit's ports and flip-flops."""
    if w.inputs != circuit.inputs:
        raise WorkloadError(
            f"workload inputs {list(w.inputs)} do not match data inputs {list(circuit.inputs)}"
        )
    unknown = [p for p in w.observed_outputs if p not in circuit.outputs]
    if unknown:
        raise WorkloadError(f"observed outputs {unknown} are not output ports")
    if w.initial_state is not None and len(w.initial_state) != circuit.n_flipflops:
        raise WorkloadError(
            f"initial state has {len(w.initial_state)} bits for {circuit.n_flipflops} flip-flops"
        )


def initial_state(circuit: CompiledCircuit, w: Workload, lanes: int) -> BoolArray:
    bits = np.zeros(circuit.n_flipflops, dtype=np.bool_)
    if w.initial_state is not None:
        bits = np.asarray(w.initial_state, dtype=np.bool_)
    return np.repeat(bits[:, None], lanes, axis=1)


def _run(circuit: CompiledCircuit, w: Workload, flips: FlipList) -> Trace:
    check_workload(circuit, w)
    ff_pos = {name: i for i, name in enumerate(circuit.flipflops)}
    flips_at: Dict[int, List[int]] = {}
    for ff, t in flips:
        if ff not in ff_pos:
            raise WorkloadError(f"unknown flip-flop '{ff}'")
        if not 0 <= t < w.n_cycles:
            raise WorkloadError(f"cycle {t} out of range 0..{w.n_cycles - 1}")
        flips_at.setdefault(t, []).append(ff_pos[ff])

    values = np.zeros((len(circuit.nets), 1), dtype=np.bool_)
    state = initial_state(circuit, w, 1)
    trace = np.zeros((w.n_cycles, len(circuit.nets)), dtype=np.bool_)
    for t in range(w.n_cycles):
        for i in flips_at.get(t, ()):
            state[i] ^= True
        circuit.evaluate(values, state, w.stimulus[t])
        trace[t] = values[:, 0]
        state = circuit.next_state(values)
    return Trace(nets=circuit.nets, values=trace)


def golden_trace(circuit: CompiledCircuit, w: Workload) -> Trace:
    """Fault-free run of an already compiled circuit."""
    return _run(circuit, w, ())


def simulate_golden(n: Netlist, w: Workload) -> Trace:
    """Fault-free reference run.

    Per cycle: flip-flop outputs take the current state, the cycle's inputs
    are applied, combinational logic settles in topological order, net
    values are recorded, then every flip-flop latches its D input.
    """
    trace = golden_trace(compile_circuit(n), w)
    logger.debug(
        f"Golden run of {n.name} over {w.n_cycles} cycles",
        extra={"circuit": n.name, "cycles": w.n_cycles},
    )
    return trace


def simulate_with_flips(n: Netlist, w: Workload, flips: FlipList) -> Trace:
    """Run with the state bit of each (flip-flop, cycle) inverted at the start of that cycle.

    A pair listed twice flips the bit back.
    """
    return _run(compile_circuit(n), w, flips)


def simulate_lanes(
    circuit: CompiledCircuit,
    w: Workload,
    golden: Trace,
    ff_lanes: IntArray,
    cycle_lanes: IntArray,
) -> IntArray:
    """Simulate one single-bit upset per lane against a golden trace.

    Lane j inverts flip-flop ``ff_lanes[j]`` at the start of cycle
    ``cycle_lanes[j]``. Simulation starts at the earliest injection cycle
    from the golden state and stops once every lane has failed.

    Returns:
        First cycle at which each lane's observed outputs differ from the
        golden run, or -1 for lanes that never fail.
    """
    lanes = int(ff_lanes.size)
    first_failure = np.full(lanes, -1, dtype=np.int64)
    if lanes == 0:
        return first_failure

    obs = circuit.output_indices(w.observed_outputs)
    start = int(cycle_lanes.min())
    state = np.repeat(golden.values[start, circuit.ff_q][:, None], lanes, axis=1)
    values = np.zeros((len(circuit.nets), lanes), dtype=np.bool_)
    lane_ids = np.arange(lanes)

    for t in range(start, w.n_cycles):
        hit = cycle_lanes == t
        if np.any(hit):
            state[ff_lanes[hit], lane_ids[hit]] ^= True
        circuit.evaluate(values, state, w.stimulus[t])
        if obs.size:
            mismatch = np.any(values[obs] != golden.values[t, obs][:, None], axis=0)
            newly = mismatch & (first_failure < 0)
            first_failure[newly] = t
            if np.all(first_failure >= 0):
                break
        state = circuit.next_state(values)
    return first_failure


# --- Workloads ---


def generate_workload(
    n: Netlist,
    n_cycles: int,
    seed: int,
    observed_outputs: Sequence[str] | None = None,
) -> Workload:
    """Seeded uniform random input vectors for every data input."""
    rng = np.random.default_rng(seed)
    inputs = tuple(n.data_inputs)
    stimulus = rng.integers(0, 2, size=(n_cycles, len(inputs)), dtype=np.uint8)
    observed = tuple(observed_outputs) if observed_outputs is not None else tuple(n.outputs)
    return Workload(
        n_cycles=n_cycles, inputs=inputs, stimulus=stimulus, observed_outputs=observed
    )


def write_workload(w: Workload, path: Path) -> None:
    """Write one hex vector per cycle; bit i is data input i."""
    width = max(1, (len(w.inputs) + 3) // 4)
    lines = [f"# inputs: {' '.join(w.inputs)}"]
    for row in w.stimulus:
        value = sum(int(bit) << i for i, bit in enumerate(row))
        lines.append(f"{value:0{width}x}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_workload(
    path: Path, n: Netlist, observed_outputs: Sequence[str] | None = None
) -> Workload:
    """Read a hex workload file for the data inputs of ``n``.

    Blank lines and ``#`` comments are skipped.

    Raises:
        WorkloadError: On unreadable files, malformed vectors or values wider
            than the input count
    """
    text = read_text_file(path, WorkloadError, "workload")

    inputs = tuple(n.data_inputs)
    rows: List[List[int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            value = int(line, 16)
        except ValueError:
            raise WorkloadError(f"{path}:{lineno}: '{line}' is not a hex vector")
        if value >> len(inputs):
            raise WorkloadError(f"{path}:{lineno}: vector {line} wider than {len(inputs)} inputs")
        rows.append([(value >> i) & 1 for i in range(len(inputs))])

    if not rows:
        raise WorkloadError(f"{path}: workload has no cycles")
    stimulus = np.array(rows, dtype=np.uint8).reshape(len(rows), len(inputs))
    observed = tuple(observed_outputs) if observed_outputs is not None else tuple(n.outputs)
    return Workload(
        n_cycles=len(rows), inputs=inputs, stimulus=stimulus, observed_outputs=observed
    )
