"""Custom exceptions for the FDR-GCN toolchain."""


class FdrGcnError(Exception):
    """Base exception for the FDR-GCN toolchain."""

    exit_code: int = 1


class FdrGcnConfigError(FdrGcnError):
    """Configuration or usage error."""

    exit_code = 1


class FdrGcnInputError(FdrGcnError):
    """Input data error (netlists, graphs, artifacts)."""

    exit_code = 2


class NetlistError(FdrGcnInputError):
    """Netlist parse or elaboration error."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        """Initialize netlist error, optionally with the offending source position."""
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class GmlError(FdrGcnInputError):
    """Malformed or inconsistent GML document."""

    pass


class GraphError(FdrGcnInputError):
    """Invalid graph or adjacency operand."""

    pass


class WorkloadError(FdrGcnInputError):
    """Invalid workload or injection request."""

    pass


class CombinationalLoopError(FdrGcnInputError):
    """The combinational part of the netlist contains a cycle."""

    def __init__(self, message: str, cycle: list[str]):
        """Initialize loop error with the nets along the cycle."""
        super().__init__(message)
        self.cycle = cycle


class EmbeddingError(FdrGcnInputError):
    """Invalid walks or embedding result."""

    pass


class GcnError(FdrGcnInputError):
    """Dimension mismatch, stale cache or empty training mask."""

    pass


class EvaluationError(FdrGcnInputError):
    """Invalid values or mismatched tables handed to the evaluation."""

    pass


class StageMissingError(FdrGcnInputError):
    """An upstream pipeline artifact has not been produced yet."""

    def __init__(self, stage: str, path: str):
        """Initialize with the stage that produces the missing artifact."""
        super().__init__(f"missing artifact {path}: run the '{stage}' stage first")
        self.stage = stage
        self.path = path


class GuardExceededError(FdrGcnError):
    """An internal size guard refused the request."""

    exit_code = 3

    def __init__(self, message: str, requested: int, limit: int):
        """Initialize guard error."""
        super().__init__(message)
        self.requested = requested
        self.limit = limit
