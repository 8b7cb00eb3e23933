"""Version utilities for FDR-GCN."""

import tomllib
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

_PYPROJECT = Path(__file__).parent.parent / "pyproject.toml"
_UNKNOWN = {"name": "unknown", "version": "unknown", "description": "unknown"}


def _read_project_table() -> dict[str, str] | None:
    if not _PYPROJECT.exists():
        return None
    with open(_PYPROJECT, "rb") as f:
        return tomllib.load(f).get("project", {})


def get_version() -> str:
    """Get the version from pyproject.toml, falling back to installed metadata."""
    try:
        project = _read_project_table()
        if project is not None:
            return project.get("version", "unknown")
        return version("fdr-gcn")
    except PackageNotFoundError:
        return "unknown"
    except Exception:
        return "unknown"


def get_project_info() -> dict[str, str]:
    """Get project name, version and description."""
    try:
        project = _read_project_table()
        if project is None:
            return dict(_UNKNOWN, version=get_version())
        return {
            "name": project.get("name", "unknown"),
            "version": project.get("version", "unknown"),
            "description": project.get("description", "unknown"),
        }
    except Exception:
        return dict(_UNKNOWN)


__version__ = get_version()
