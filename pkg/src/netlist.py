"""Gate-level netlist frontend.

Two equivalent input formats are accepted:

* a structural Verilog subset: one ``module`` with an optional header port
  list, ``input``/``output``/``wire`` declarations and named-port
  instantiations of the primitive cells below (``//`` and ``/* */``
  comments allowed);
* json-netlist: ``{"name", "ports": [{"name", "direction"}], "nets": [...],
  "cells": [{"name", "kind", "pins": {pin: net}}]}``.

Both are elaborated into an immutable :class:`Netlist`.
"""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

import pyparsing as pp
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, ValidationError

from .exceptions import NetlistError
from .workspace import read_text_file

logger = get_logger(__name__)

CLOCK_PIN = "CLK"


class CellKind(str, Enum):
    """Primitive cell library."""

    AND2 = "AND2"
    OR2 = "OR2"
    NAND2 = "NAND2"
    NOR2 = "NOR2"
    XOR2 = "XOR2"
    XNOR2 = "XNOR2"
    NOT = "NOT"
    BUF = "BUF"
    MUX2 = "MUX2"
    DFF = "DFF"

    @property
    def inputs(self) -> Tuple[str, ...]:
        return _CELL_PINS[self][0]

    @property
    def output(self) -> str:
        return _CELL_PINS[self][1]

    @property
    def pins(self) -> Tuple[str, ...]:
        return self.inputs + (self.output,)

    @property
    def arity(self) -> int:
        return len(self.inputs)

    @property
    def is_sequential(self) -> bool:
        return self is CellKind.DFF


# MUX2 selects B when S is 1, A otherwise.
_CELL_PINS: Dict[CellKind, Tuple[Tuple[str, ...], str]] = {
    CellKind.AND2: (("A", "B"), "Y"),
    CellKind.OR2: (("A", "B"), "Y"),
    CellKind.NAND2: (("A", "B"), "Y"),
    CellKind.NOR2: (("A", "B"), "Y"),
    CellKind.XOR2: (("A", "B"), "Y"),
    CellKind.XNOR2: (("A", "B"), "Y"),
    CellKind.NOT: (("A",), "Y"),
    CellKind.BUF: (("A",), "Y"),
    CellKind.MUX2: (("A", "B", "S"), "Y"),
    CellKind.DFF: (("D", CLOCK_PIN), "Q"),
}


class PortDirection(str, Enum):
    """Direction of a module port."""

    INPUT = "input"
    OUTPUT = "output"


class Port(BaseModel):
    """A module port; its net carries the same name."""

    model_config = ConfigDict(frozen=True)

    name: str
    direction: PortDirection


class Cell(BaseModel):
    """An elaborated cell instance with its pin to net binding."""

    model_config = ConfigDict(frozen=True)

    name: str
    kind: CellKind
    pins: Dict[str, str]

    @property
    def output_net(self) -> str:
        return self.pins[self.kind.output]


class Netlist(BaseModel):
    """An elaborated, single-clock gate-level circuit."""

    model_config = ConfigDict(frozen=True)

    name: str
    ports: List[Port]
    nets: List[str]
    cells: List[Cell]
    flipflops: List[str]
    clock: str | None = None

    @property
    def inputs(self) -> List[str]:
        return [p.name for p in self.ports if p.direction is PortDirection.INPUT]

    @property
    def outputs(self) -> List[str]:
        return [p.name for p in self.ports if p.direction is PortDirection.OUTPUT]

    @property
    def data_inputs(self) -> List[str]:
        """Input ports other than the clock, in declaration order."""
        return [name for name in self.inputs if name != self.clock]

    def cell(self, name: str) -> Cell:
        for c in self.cells:
            if c.name == name:
                return c
        raise KeyError(name)


class Driver(NamedTuple):
    """What drives a net: an input port or a cell output."""

    kind: str  # "port" or "cell"
    name: str


class Sink(NamedTuple):
    """A consumer of a net: a cell input pin or an output port."""

    kind: str  # "port" or "cell"
    name: str
    pin: str


def list_flipflops(n: Netlist) -> List[str]:
    """Flip-flop instance names in source order."""
    return list(n.flipflops)


def net_drivers(n: Netlist) -> Dict[str, Driver]:
    """Driver of every net."""
    drivers: Dict[str, Driver] = {}
    for port in n.ports:
        if port.direction is PortDirection.INPUT:
            drivers[port.name] = Driver("port", port.name)
    for cell in n.cells:
        drivers[cell.output_net] = Driver("cell", cell.name)
    return drivers


def net_sinks(n: Netlist, include_clock: bool = False) -> Dict[str, List[Sink]]:
    """Sinks of every net, cells in source order then output ports.

    DFF clock pins are left out unless ``include_clock`` is set.
    """
    sinks: Dict[str, List[Sink]] = {net: [] for net in n.nets}
    for cell in n.cells:
        for pin in cell.kind.inputs:
            if pin == CLOCK_PIN and not include_clock:
                continue
            sinks[cell.pins[pin]].append(Sink("cell", cell.name, pin))
    for port in n.ports:
        if port.direction is PortDirection.OUTPUT:
            sinks[port.name].append(Sink("port", port.name, port.name))
    return sinks


# --- Elaboration ---


class _CellSpec(NamedTuple):
    name: str
    kind: str
    pins: List[Tuple[str, str]]
    line: int | None = None
    column: int | None = None


def _fail(message: str, spec: _CellSpec | None = None) -> NetlistError:
    if spec is not None and spec.line is not None:
        return NetlistError(message, spec.line, spec.column)
    return NetlistError(message)


def _elaborate(
    name: str,
    ports: Sequence[Tuple[str, str]],
    nets: Sequence[str],
    cell_specs: Sequence[_CellSpec],
) -> Netlist:
    """Validate connectivity and build the immutable netlist."""
    seen_ports: set[str] = set()
    port_models: List[Port] = []
    for port_name, direction in ports:
        if port_name in seen_ports:
            raise NetlistError(f"port '{port_name}' declared twice")
        seen_ports.add(port_name)
        try:
            port_models.append(Port(name=port_name, direction=PortDirection(direction)))
        except ValueError:
            raise NetlistError(f"port '{port_name}' has invalid direction '{direction}'")

    net_set: set[str] = set()
    for net in nets:
        if net in net_set:
            raise NetlistError(f"net '{net}' declared twice")
        net_set.add(net)
    for port in port_models:
        if port.name not in net_set:
            raise NetlistError(f"port '{port.name}' has no net of the same name")

    cells: List[Cell] = []
    cell_names: set[str] = set()
    for spec in cell_specs:
        if spec.name in cell_names:
            raise _fail(f"cell instance '{spec.name}' declared twice", spec)
        cell_names.add(spec.name)
        try:
            kind = CellKind(spec.kind)
        except ValueError:
            raise _fail(f"unknown cell kind '{spec.kind}' for instance '{spec.name}'", spec)
        pins: Dict[str, str] = {}
        for pin, net in spec.pins:
            if pin not in kind.pins:
                raise _fail(f"cell '{spec.name}' ({kind.value}) has no pin '{pin}'", spec)
            if pin in pins:
                raise _fail(f"pin '{pin}' of cell '{spec.name}' bound twice", spec)
            if net not in net_set:
                raise _fail(f"cell '{spec.name}' pin '{pin}' uses undeclared net '{net}'", spec)
            pins[pin] = net
        for pin in kind.pins:
            if pin not in pins:
                raise _fail(f"unbound pin '{pin}' of cell '{spec.name}'", spec)
        cells.append(Cell(name=spec.name, kind=kind, pins={p: pins[p] for p in kind.pins}))

    drivers: Dict[str, str] = {}
    for port in port_models:
        if port.direction is PortDirection.INPUT:
            drivers[port.name] = f"input port '{port.name}'"
    for cell, spec in zip(cells, cell_specs):
        net = cell.output_net
        if net in drivers:
            raise _fail(
                f"net '{net}' is driven more than once ({drivers[net]} and cell '{cell.name}')",
                spec,
            )
        drivers[net] = f"cell '{cell.name}'"

    clock_nets = {c.pins[CLOCK_PIN] for c in cells if c.kind.is_sequential}
    if len(clock_nets) > 1:
        raise NetlistError(
            f"flip-flops use more than one clock net: {', '.join(sorted(clock_nets))}"
        )
    clock = next(iter(clock_nets)) if clock_nets else None
    inputs = {p.name for p in port_models if p.direction is PortDirection.INPUT}
    if clock is not None and clock not in inputs:
        raise NetlistError(f"clock net '{clock}' must be an input port")

    used: set[str] = set()
    for cell, spec in zip(cells, cell_specs):
        for pin in cell.kind.inputs:
            net = cell.pins[pin]
            if net == clock and pin != CLOCK_PIN:
                raise _fail(
                    f"clock net '{clock}' drives data pin '{pin}' of cell '{cell.name}'",
                    spec,
                )
            if net not in drivers:
                raise _fail(
                    f"undriven net '{net}' used as input of cell '{cell.name}'", spec
                )
            used.add(net)
    for port in port_models:
        if port.direction is PortDirection.OUTPUT:
            if port.name not in drivers:
                raise NetlistError(f"output port '{port.name}' is undriven")
            if port.name == clock:
                raise NetlistError(f"clock net '{clock}' cannot be an output port")
    for net in nets:
        if net not in drivers:
            raise NetlistError(f"net '{net}' has no driver")

    netlist = Netlist(
        name=name,
        ports=port_models,
        nets=list(nets),
        cells=cells,
        flipflops=[c.name for c in cells if c.kind.is_sequential],
        clock=clock,
    )
    logger.debug(
        f"Elaborated netlist {name}",
        extra={"cells": len(cells), "nets": len(nets), "flipflops": len(netlist.flipflops)},
    )
    return netlist


# --- Verilog subset ---


class _Declaration(NamedTuple):
    direction: str
    names: List[str]
    line: int
    column: int


def _make_declaration(source: str, loc: int, tokens: pp.ParseResults) -> _Declaration:
    return _Declaration(
        str(tokens["direction"]),
        [str(t) for t in tokens["names"]],
        pp.lineno(loc, source),
        pp.col(loc, source),
    )


def _make_instance(source: str, loc: int, tokens: pp.ParseResults) -> _CellSpec:
    pins = [(str(c["pin"]), str(c["net"])) for c in tokens["pins"]]
    return _CellSpec(
        str(tokens["name"]),
        str(tokens["kind"]),
        pins,
        pp.lineno(loc, source),
        pp.col(loc, source),
    )


_KEYWORDS = frozenset({"module", "endmodule", "input", "output", "wire"})


def _build_verilog_grammar() -> pp.ParserElement:
    lpar, rpar, semi, dot = map(pp.Suppress, "();.")
    identifier = (
        pp.Word(pp.alphas + "_", pp.alphanums + "_$")
        .add_condition(lambda tokens: tokens[0] not in _KEYWORDS)
        .set_name("identifier")
    )

    header = lpar + pp.Optional(pp.DelimitedList(identifier)) + rpar
    declaration = (
        (pp.Keyword("input") | pp.Keyword("output") | pp.Keyword("wire"))("direction")
        + pp.Group(pp.DelimitedList(identifier))("names")
        + semi
    ).set_parse_action(_make_declaration)
    connection = pp.Group(dot + identifier("pin") + lpar + identifier("net") + rpar)
    instance = (
        identifier("kind")
        + identifier("name")
        + lpar
        + pp.Group(pp.Optional(pp.DelimitedList(connection)))("pins")
        + rpar
        + semi
    ).set_parse_action(_make_instance)

    module = (
        pp.Keyword("module").suppress()
        + identifier("module_name")
        + pp.Optional(pp.Group(header)("header"))
        + semi
        + pp.Group(pp.ZeroOrMore(declaration | instance))("items")
        + pp.Keyword("endmodule").suppress()
        + pp.StringEnd()
    )
    module.ignore(pp.cpp_style_comment)
    return module


_VERILOG_GRAMMAR = _build_verilog_grammar()


def _parse_verilog(source_text: str) -> Netlist:
    try:
        result = _VERILOG_GRAMMAR.parse_string(source_text, parse_all=True)
    except pp.ParseException as e:
        raise NetlistError(f"syntax error: {e.msg}", e.lineno, e.col)

    ports: List[Tuple[str, str]] = []
    wires: List[str] = []
    cell_specs: List[_CellSpec] = []
    for item in result["items"]:
        if isinstance(item, _Declaration):
            for name in item.names:
                if item.direction == "wire":
                    wires.append(name)
                else:
                    ports.append((name, item.direction))
        else:
            cell_specs.append(item)

    header = [str(t) for t in result.get("header", [])]
    if header and sorted(header) != sorted(p for p, _ in ports):
        raise NetlistError(
            "module header port list does not match the input/output declarations"
        )

    nets = [p for p, _ in ports] + wires
    return _elaborate(str(result["module_name"]), ports, nets, cell_specs)


# --- json-netlist ---


class _JsonPort(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: str
    direction: str


class _JsonCell(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: str
    kind: str
    pins: Dict[str, str]


class _JsonNetlist(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: str
    ports: List[_JsonPort]
    nets: List[str]
    cells: List[_JsonCell]


def _parse_json(source_text: str) -> Netlist:
    try:
        document = _JsonNetlist.model_validate_json(source_text)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise NetlistError(f"invalid json-netlist at '{location}': {first['msg']}")
    specs = [_CellSpec(c.name, c.kind, list(c.pins.items())) for c in document.cells]
    ports = [(p.name, p.direction) for p in document.ports]
    return _elaborate(document.name, ports, document.nets, specs)


def parse_netlist(source_text: str, format: str = "verilog") -> Netlist:
    """Parse and elaborate a netlist given as text.

    Args:
        source_text: Netlist source
        format: ``"verilog"`` (structural subset) or ``"json"`` (json-netlist)

    Returns:
        The elaborated netlist

    Raises:
        NetlistError: On syntax errors (with line/column), unknown cell kinds,
            unbound pins, multiply-driven or undriven nets
    """
    if format in ("verilog", "verilog-subset"):
        return _parse_verilog(source_text)
    if format in ("json", "json-netlist"):
        return _parse_json(source_text)
    raise NetlistError(f"unsupported netlist format '{format}'")


def load_netlist(path: Path) -> Netlist:
    """Parse a netlist file, choosing the format from its suffix."""
    text = read_text_file(path, NetlistError, "netlist")
    fmt = "json" if path.suffix.lower() == ".json" else "verilog"
    netlist = parse_netlist(text, fmt)
    logger.info(
        f"Loaded netlist {netlist.name} from {path}",
        extra={
            "path": str(path),
            "cells": len(netlist.cells),
            "flipflops": len(netlist.flipflops),
        },
    )
    return netlist


def to_json_netlist(n: Netlist) -> str:
    """Pretty-print a netlist as a json-netlist document."""
    document: Dict[str, Any] = {
        "name": n.name,
        "ports": [{"name": p.name, "direction": p.direction.value} for p in n.ports],
        "nets": list(n.nets),
        "cells": [
            {"name": c.name, "kind": c.kind.value, "pins": dict(c.pins)} for c in n.cells
        ],
    }
    return json.dumps(document, indent=2) + "\n"
