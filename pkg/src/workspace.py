"""Artifact layout of a pipeline working directory."""

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import pandas as pd
from fastmcp.utilities.logging import get_logger

from .exceptions import FdrGcnInputError, StageMissingError

logger = get_logger(__name__)

PLOT_FILES = ("ci.dat", "hist_pred.dat", "hist_sim.dat", "sorted.dat")


@dataclass(frozen=True)
class Workspace:
    """Where every stage reads and writes its artifacts."""

    root: Path
    circuit: str

    @property
    def gml(self) -> Path:
        return self.root / f"{self.circuit}.gml"

    @property
    def netlist(self) -> Path:
        return self.root / "netlist.json"

    @property
    def embeddings(self) -> Path:
        return self.root / "embeddings.csv"

    @property
    def workload(self) -> Path:
        return self.root / "workload.hex"

    @property
    def labels(self) -> Path:
        return self.root / "labels.csv"

    @property
    def training(self) -> Path:
        return self.root / "training.csv"

    @property
    def weights(self) -> Path:
        return self.root / "weights.json"

    @property
    def loss(self) -> Path:
        return self.root / "loss.csv"

    @property
    def predictions(self) -> Path:
        return self.root / "predictions.csv"

    @property
    def report(self) -> Path:
        return self.root / "report.csv"

    @property
    def report_filtered(self) -> Path:
        return self.root / "report_filtered.csv"

    def plot_file(self, name: str) -> Path:
        return self.root / name

    def ensure(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)

    def require(self, path: Path, stage: str) -> Path:
        """Return ``path`` if it exists.

        Raises:
            StageMissingError: Naming the stage that produces ``path``
        """
        if not path.exists():
            logger.error(
                f"Missing artifact {path.name}: run '{stage}' first",
                extra={"path": str(path), "stage": stage},
            )
            raise StageMissingError(stage, str(path))
        return path


def read_text_file(path: Path, error: type[FdrGcnInputError], what: str) -> str:
    """Read a UTF-8 file, reporting missing or unreadable files as ``error``."""
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise error(f"{what} file not found: {path}")
    except UnicodeDecodeError as e:
        raise error(f"{what} file {path} is not valid UTF-8: {e.reason} at byte {e.start}")
    except OSError as e:
        raise error(f"cannot read {what} file {path}: {e.strerror or e}")


def read_csv_file(path: Path, error: type[FdrGcnInputError], **kwargs: Any) -> pd.DataFrame:
    """Read a CSV artifact, reporting unreadable or malformed files as ``error``."""
    try:
        return pd.read_csv(path, **kwargs)
    except UnicodeDecodeError as e:
        raise error(f"{path} is not valid UTF-8: {e.reason} at byte {e.start}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise error(f"{path}: malformed CSV: {e}")
    except OSError as e:
        raise error(f"cannot read {path}: {e.strerror or e}")
