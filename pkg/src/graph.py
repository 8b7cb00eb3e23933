"""Circuit graph, GML serialization and the normalized adjacency operator."""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pyparsing as pp
import scipy.sparse as sp
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict

from .exceptions import GmlError, GraphError
from .netlist import Netlist, net_drivers, net_sinks
from .types import Edge, FloatArray

logger = get_logger(__name__)


class NodeKind(str, Enum):
    """Kind of a circuit graph node."""

    PORT = "port"
    GATE = "gate"
    FLIPFLOP = "flipflop"


class GraphNode(BaseModel):
    """A node of the circuit graph."""

    model_config = ConfigDict(frozen=True)

    index: int
    name: str
    kind: NodeKind


class CircuitGraph(BaseModel):
    """Structural signal-flow graph of a netlist.

    Nodes are densely indexed 0..N-1; directed edges run driver -> sink.
    """

    model_config = ConfigDict(frozen=True)

    nodes: List[GraphNode]
    directed_edges: List[Tuple[int, int]]

    @property
    def size(self) -> int:
        return len(self.nodes)

    def index_of(self, name: str) -> int:
        for node in self.nodes:
            if node.name == name:
                return node.index
        raise KeyError(name)

    def flipflop_nodes(self) -> Dict[str, int]:
        """Flip-flop names mapped to node indices, in index order."""
        return {n.name: n.index for n in self.nodes if n.kind is NodeKind.FLIPFLOP}

    def neighbors(self) -> List[List[int]]:
        """Sorted neighbor lists of the symmetrized graph."""
        adjacent: List[set[int]] = [set() for _ in self.nodes]
        for source, target in self.directed_edges:
            adjacent[source].add(target)
            adjacent[target].add(source)
        return [sorted(a) for a in adjacent]


@dataclass(frozen=True)
class NormalizedAdjacency:
    """S = D^-1/2 (A + I) D^-1/2 as a sparse symmetric matrix."""

    matrix: sp.csr_matrix
    degrees: FloatArray

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def toarray(self) -> FloatArray:
        return np.asarray(self.matrix.toarray(), dtype=np.float64)


def build_graph(n: Netlist) -> CircuitGraph:
    """Build the circuit graph of an elaborated netlist.

    One node per port (declaration order) then one per cell (source order);
    one edge from the driver of each net to each of its sinks. The clock
    net produces no edges.
    """
    nodes: List[GraphNode] = []
    port_index: Dict[str, int] = {}
    cell_index: Dict[str, int] = {}
    for port in n.ports:
        port_index[port.name] = len(nodes)
        nodes.append(GraphNode(index=len(nodes), name=port.name, kind=NodeKind.PORT))
    for cell in n.cells:
        cell_index[cell.name] = len(nodes)
        kind = NodeKind.FLIPFLOP if cell.kind.is_sequential else NodeKind.GATE
        nodes.append(GraphNode(index=len(nodes), name=cell.name, kind=kind))

    drivers = net_drivers(n)
    sinks = net_sinks(n)
    edges: List[Edge] = []
    seen: set[Edge] = set()
    for net in n.nets:
        if net == n.clock:
            continue
        driver = drivers[net]
        source = port_index[driver.name] if driver.kind == "port" else cell_index[driver.name]
        targets = sorted(
            port_index[s.name] if s.kind == "port" else cell_index[s.name] for s in sinks[net]
        )
        for target in targets:
            edge = (source, target)
            # Â already carries the self loop; a cell reading one net on two pins adds one edge.
            if source == target or edge in seen:
                continue
            seen.add(edge)
            edges.append(edge)

    graph = CircuitGraph(nodes=nodes, directed_edges=edges)
    logger.info(
        f"Built graph for {n.name}: {len(nodes)} nodes, {len(edges)} edges",
        extra={"circuit": n.name, "nodes": len(nodes), "edges": len(edges)},
    )
    return graph


# --- GML ---


def export_gml(g: CircuitGraph) -> str:
    """Serialize a graph to the GML subset (byte-deterministic)."""
    if not g.nodes and not g.directed_edges:
        return "graph [ directed 1 ]\n"
    lines = ["graph [", "  directed 1"]
    for node in g.nodes:
        if '"' in node.name:
            raise GmlError(f"node name {node.name!r} cannot be written as a GML string")
        lines.append(f'  node [ id {node.index} label "{node.name}" kind "{node.kind.value}" ]')
    for source, target in g.directed_edges:
        lines.append(f"  edge [ source {source} target {target} ]")
    lines.append("]")
    return "\n".join(lines) + "\n"


def _build_gml_grammar() -> pp.ParserElement:
    key = pp.Word(pp.alphas + "_", pp.alphanums + "_")
    number = pp.Regex(r"[+-]?\d+(\.\d*)?([eE][+-]?\d+)?")
    string = pp.QuotedString('"', multiline=True)
    block = pp.Forward()
    value = string | number | block
    pair = pp.Group(key + value)
    block <<= pp.Group(pp.Suppress("[") + pp.ZeroOrMore(pair) + pp.Suppress("]"))
    document = pp.ZeroOrMore(pair) + pp.StringEnd()
    document.ignore(pp.python_style_comment)
    return document


_GML_GRAMMAR = _build_gml_grammar()


def _block_int(block: pp.ParseResults, key: str, what: str) -> int:
    for item in block:
        if item[0] == key:
            try:
                return int(str(item[1]))
            except ValueError:
                raise GmlError(f"{what}: '{key}' must be an integer, got {item[1]!r}")
    raise GmlError(f"{what}: missing '{key}'")


def _block_str(block: pp.ParseResults, key: str, default: str) -> str:
    for item in block:
        if item[0] == key and isinstance(item[1], str):
            return item[1]
    return default


def import_gml(text: str) -> CircuitGraph:
    """Parse the GML subset written by :func:`export_gml`.

    Attributes other than id/label/kind/source/target are ignored.

    Raises:
        GmlError: On malformed text, duplicate or non-dense node ids, unknown
            node kinds and edges referencing unknown ids
    """
    try:
        document = _GML_GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseException as e:
        raise GmlError(f"malformed GML at line {e.lineno}, column {e.col}: {e.msg}")

    graphs = [item for item in document if item[0] == "graph"]
    if len(graphs) != 1 or isinstance(graphs[0][1], str):
        raise GmlError("GML document must hold exactly one 'graph [ ... ]' block")
    body = graphs[0][1]

    nodes_by_id: Dict[int, GraphNode] = {}
    raw_edges: List[Tuple[int, int]] = []
    for item in body:
        if item[0] in ("node", "edge") and isinstance(item[1], str):
            raise GmlError(f"'{item[0]}' must be followed by a [ ... ] block")
        if item[0] == "node":
            node_id = _block_int(item[1], "id", "node")
            if node_id in nodes_by_id:
                raise GmlError(f"duplicate node id {node_id}")
            kind_text = _block_str(item[1], "kind", NodeKind.GATE.value)
            try:
                kind = NodeKind(kind_text)
            except ValueError:
                raise GmlError(f"node {node_id}: unknown kind '{kind_text}'")
            label = _block_str(item[1], "label", str(node_id))
            nodes_by_id[node_id] = GraphNode(index=node_id, name=label, kind=kind)
        elif item[0] == "edge":
            raw_edges.append(
                (_block_int(item[1], "source", "edge"), _block_int(item[1], "target", "edge"))
            )

    if sorted(nodes_by_id) != list(range(len(nodes_by_id))):
        raise GmlError("node ids must be dense 0..N-1")
    for source, target in raw_edges:
        for endpoint in (source, target):
            if endpoint not in nodes_by_id:
                raise GmlError(f"edge {source} -> {target} references unknown node id {endpoint}")
        if source == target:
            raise GmlError(f"self-edge on node {source}")

    return CircuitGraph(
        nodes=[nodes_by_id[i] for i in range(len(nodes_by_id))],
        directed_edges=raw_edges,
    )


# --- Adjacency ---


def adjacency_matrix(g: CircuitGraph) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency matrix with zero diagonal."""
    n = g.size
    if not g.directed_edges:
        return sp.csr_matrix((n, n), dtype=np.float64)
    sources = np.array([e[0] for e in g.directed_edges], dtype=np.int64)
    targets = np.array([e[1] for e in g.directed_edges], dtype=np.int64)
    rows = np.concatenate([sources, targets])
    cols = np.concatenate([targets, sources])
    off_diagonal = rows != cols
    rows, cols = rows[off_diagonal], cols[off_diagonal]
    matrix = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    return matrix


def normalize_adjacency(a: sp.spmatrix | FloatArray) -> NormalizedAdjacency:
    """Symmetric normalization with self loops: D^-1/2 (A + I) D^-1/2.

    Entry (i, j) of the result is computed as 1 / sqrt(d_i * d_j), which keeps
    the operator bitwise symmetric.

    Raises:
        GraphError: If ``a`` is not a square symmetric 0/1 matrix with an
            empty diagonal
    """
    matrix = sp.csr_matrix(a, dtype=np.float64, copy=True)
    matrix.eliminate_zeros()
    if matrix.shape[0] != matrix.shape[1]:
        raise GraphError(f"adjacency matrix must be square, got {matrix.shape}")
    if (matrix != matrix.T).nnz != 0:
        raise GraphError("adjacency matrix must be symmetric")
    if np.any(matrix.diagonal() != 0):
        raise GraphError("adjacency matrix must have an empty diagonal")
    if np.any(matrix.data != 1.0):
        raise GraphError("adjacency matrix entries must be 0 or 1")

    n = int(matrix.shape[0])
    a_hat = (matrix + sp.identity(n, dtype=np.float64, format="csr")).tocoo()
    degrees = np.asarray(a_hat.sum(axis=1), dtype=np.float64).ravel()
    data = a_hat.data / np.sqrt(degrees[a_hat.row] * degrees[a_hat.col])
    normalized = sp.csr_matrix((data, (a_hat.row, a_hat.col)), shape=(n, n))
    return NormalizedAdjacency(matrix=normalized, degrees=degrees)


def permute_adjacency(s: NormalizedAdjacency, order: Sequence[int]) -> NormalizedAdjacency:
    """Relabel nodes: new node k is old node order[k]."""
    idx = np.asarray(order, dtype=np.int64)
    permuted = sp.csr_matrix(s.matrix[idx][:, idx])
    return NormalizedAdjacency(matrix=permuted, degrees=s.degrees[idx])
