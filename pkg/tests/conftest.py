"""Pytest configuration and fixtures."""

import os
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from src import bundled_circuit
from src.netlist import Netlist, load_netlist, parse_netlist
from src.simulator import Workload


@pytest.fixture(autouse=True)
def mock_environment_variables():
    """Isolate every test from FDRGCN_* variables and .env files."""
    clean = {k: v for k, v in os.environ.items() if not k.startswith("FDRGCN_")}
    with patch.dict(os.environ, clean, clear=True):
        with patch("src.config._find_env_file", return_value=None):
            yield


@pytest.fixture
def sr4_path() -> Path:
    return bundled_circuit("sr4")


@pytest.fixture
def sr4(sr4_path: Path) -> Netlist:
    return load_netlist(sr4_path)


@pytest.fixture
def lfsr_cmp() -> Netlist:
    return load_netlist(bundled_circuit("lfsr_cmp"))


@pytest.fixture
def workdir(tmp_path: Path) -> Path:
    return tmp_path / "work"


def make_netlist(source: str) -> Netlist:
    """Elaborate an inline Verilog-subset module."""
    return parse_netlist(source, format="verilog")


def make_workload(n: Netlist, rows: list[list[int]], observed=None) -> Workload:
    """Workload with an explicit stimulus matrix (one row per cycle)."""
    inputs = tuple(n.data_inputs)
    stimulus = np.array(rows, dtype=np.uint8).reshape(len(rows), len(inputs))
    return Workload(
        n_cycles=len(rows),
        inputs=inputs,
        stimulus=stimulus,
        observed_outputs=tuple(observed) if observed is not None else tuple(n.outputs),
    )


@pytest.fixture
def observed_dff() -> Netlist:
    """One DFF whose Q is the only output."""
    return make_netlist(
        """
        module observed (clk, d, q);
          input clk, d;
          output q;
          DFF r (.D(d), .CLK(clk), .Q(q));
        endmodule
        """
    )


@pytest.fixture
def masked_dff() -> Netlist:
    """A DFF whose Q is ANDed with a constant 0 before the output."""
    return make_netlist(
        """
        module masked (clk, d, y);
          input clk, d;
          output y;
          wire q, nd, zero;
          DFF r (.D(d), .CLK(clk), .Q(q));
          NOT inv (.A(d), .Y(nd));
          AND2 z (.A(d), .B(nd), .Y(zero));
          AND2 m (.A(q), .B(zero), .Y(y));
        endmodule
        """
    )
