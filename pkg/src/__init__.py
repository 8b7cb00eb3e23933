"""FDR-GCN - predict flip-flop functional de-rating with a graph convolutional network."""

from importlib.resources import files
from pathlib import Path

from .version import get_project_info, get_version

__version__ = get_version()
__author__ = "FDR-GCN Developers"

BUNDLED_CIRCUITS = ("sr4", "lfsr_cmp")


def bundled_circuit(name: str, suffix: str = ".v") -> Path:
    """Path of a circuit shipped in ``src/circuits`` (``sr4``, ``lfsr_cmp``)."""
    if name not in BUNDLED_CIRCUITS:
        raise KeyError(f"no bundled circuit named '{name}'")
    return Path(str(files(__package__).joinpath("circuits", f"{name}{suffix}")))


__all__ = [
    "__version__",
    "__author__",
    "BUNDLED_CIRCUITS",
    "bundled_circuit",
    "get_version",
    "get_project_info",
]
