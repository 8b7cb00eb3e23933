"""Pipeline configuration management for FDR-GCN."""

import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Literal

from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .exceptions import FdrGcnConfigError
from .types import JSONDict

logger = get_logger(__name__)

DEFAULT_LABEL_COUNT = 5

# Offsets applied to the base seed by PipelineConfig.with_seed.
SEED_OFFSETS = {
    "walk": 0,
    "skipgram": 1,
    "weights": 2,
    "workload": 3,
    "campaign": 4,
    "selection": 5,
}


class WalkConfig(BaseModel):
    """node2vec random walk settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    walks_per_node: int = Field(default=10, ge=1, description="Walks started per node")
    walk_length: int = Field(default=40, ge=1, description="Maximum walk length")
    return_param_p: float = Field(default=1.0, gt=0, description="Return parameter p")
    inout_param_q: float = Field(default=1.0, gt=0, description="In-out parameter q")
    rng_seed: int = Field(default=0, ge=0, description="Seed for walk sampling")
    workers: int = Field(default=1, ge=1, description="Threads used for walk generation")


class EmbeddingConfig(BaseModel):
    """Skip-gram with negative sampling settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dimension: int = Field(default=16, ge=1, description="Feature dimension D")
    window: int = Field(default=5, ge=1, description="Context window radius")
    negatives_per_positive: int = Field(default=5, ge=1, description="Negative samples")
    epochs: int = Field(default=5, ge=0, description="Passes over the walk corpus")
    learning_rate: float = Field(default=0.025, gt=0, description="Initial learning rate")
    min_learning_rate: float = Field(default=1e-4, gt=0, description="Final learning rate")
    batch_size: int = Field(default=64, ge=1, description="Pairs per update")
    rng_seed: int = Field(default=1, ge=0, description="Seed for initialization and sampling")


class GcnConfig(BaseModel):
    """Graph convolutional network hyperparameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    layer_dims: list[int] = Field(
        default=[16, 4, 2, 1], description="Input dim, hidden dims, output dim"
    )
    hidden_activation: Literal["tanh"] = "tanh"
    output_activation: Literal["logistic"] = "logistic"
    learning_rate: float = Field(default=0.01, gt=0, description="Adam step size")
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_epsilon: float = Field(default=1e-8, gt=0)
    epochs: int = Field(default=2000, ge=0, description="Full-batch iterations")
    weight_init_seed: int = Field(default=2, ge=0, description="Seed for weight init")

    @field_validator("layer_dims")
    @classmethod
    def validate_layer_dims(cls, v: list[int]) -> list[int]:
        """Validate layer dimensions."""
        if len(v) < 3:
            raise ValueError("layer_dims needs an input, at least one hidden and an output dim")
        if any(d < 1 for d in v):
            raise ValueError("layer dimensions must be positive")
        if v[-1] != 1:
            raise ValueError("output dimension must be 1")
        return v


class CampaignConfig(BaseModel):
    """Fault injection campaign settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Literal["sampled", "exhaustive"] = "sampled"
    n_cycles: int = Field(default=1024, ge=1, description="Workload length")
    injections_per_ff: int = Field(default=64, ge=1, description="Injections per flip-flop")
    workload_seed: int = Field(default=3, ge=0, description="Seed for random stimulus")
    campaign_seed: int = Field(default=4, ge=0, description="Seed for injection cycles")
    workload_file: Path | None = Field(default=None, description="Optional hex workload")
    observed_outputs: list[str] | None = Field(
        default=None, description="Observed output ports (default: all)"
    )
    workers: int = Field(default=1, ge=1, description="Threads for lane chunks")


class LabelSelection(BaseModel):
    """Which flip-flops carry training labels."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    flipflops: list[str] | None = Field(default=None, description="Explicit flip-flops")
    count: int | None = Field(
        default=None,
        ge=1,
        description="Random stratified selection size (default: up to 5)",
    )
    seed: int = Field(default=5, ge=0, description="Seed for the selection")


class ReportConfig(BaseModel):
    """Comparison report options."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    bins: int = Field(default=20, ge=1, description="Histogram bin count")
    filter_outliers: bool = Field(default=False, description="Also emit a filtered report")
    exclude_training: bool = Field(default=False, description="Report held-out FFs only")
    plot_files: bool = Field(default=True, description="Write whitespace .dat files")


class PipelineConfig(BaseModel):
    """Complete configuration of a pipeline run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    netlist: Path | None = Field(default=None, description="Netlist source (.v or .json)")
    workdir: Path = Field(default=Path("work"), description="Artifact directory")
    seed: int = Field(default=0, ge=0, description="Base seed")
    walk: WalkConfig = WalkConfig()
    embedding: EmbeddingConfig = EmbeddingConfig()
    gcn: GcnConfig = GcnConfig()
    campaign: CampaignConfig = CampaignConfig()
    labels: LabelSelection = LabelSelection()
    report: ReportConfig = ReportConfig()

    @field_validator("workdir")
    @classmethod
    def validate_workdir(cls, v: Path) -> Path:
        """Validate workdir."""
        if not str(v).strip():
            raise ValueError("workdir cannot be empty")
        return v

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Re-derive every stage seed from a new base seed.

        Raises:
            FdrGcnConfigError: If ``seed`` is negative
        """
        if seed < 0:
            raise FdrGcnConfigError(f"seed must be a non-negative integer, got {seed}")
        return self.model_copy(
            update={
                "seed": seed,
                "walk": self.walk.model_copy(
                    update={"rng_seed": seed + SEED_OFFSETS["walk"]}
                ),
                "embedding": self.embedding.model_copy(
                    update={"rng_seed": seed + SEED_OFFSETS["skipgram"]}
                ),
                "gcn": self.gcn.model_copy(
                    update={"weight_init_seed": seed + SEED_OFFSETS["weights"]}
                ),
                "campaign": self.campaign.model_copy(
                    update={
                        "workload_seed": seed + SEED_OFFSETS["workload"],
                        "campaign_seed": seed + SEED_OFFSETS["campaign"],
                    }
                ),
                "labels": self.labels.model_copy(
                    update={"seed": seed + SEED_OFFSETS["selection"]}
                ),
            }
        )


@lru_cache(maxsize=1)
def _find_env_file() -> Path | None:
    """Find .env file in current directory or parent directories."""
    current_dir = Path.cwd()

    env_file = current_dir / ".env"
    if env_file.exists():
        return env_file

    for parent in current_dir.parents:
        env_file = parent / ".env"
        if env_file.exists():
            return env_file

    return None


def load_dotenv_if_exists():
    """Load .env file if it exists."""
    try:
        from dotenv import load_dotenv

        env_file = _find_env_file()
        if env_file:
            _ = load_dotenv(env_file)
            logger.info(
                "Loaded environment variables from .env file",
                extra={"path": str(env_file)},
            )
    except ImportError:
        logger.warning("python-dotenv not installed, skipping .env file loading")
    except Exception as e:
        logger.warning("Failed to load .env file", extra={"error": str(e)})


def _read_config_document(path: Path) -> JSONDict:
    """Read a JSON config document."""
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FdrGcnConfigError(f"Config file not found: {path}")
    except UnicodeDecodeError as e:
        raise FdrGcnConfigError(f"Config file {path} is not valid UTF-8: {e.reason}")
    except OSError as e:
        raise FdrGcnConfigError(f"Cannot read config file {path}: {e.strerror or e}")
    except json.JSONDecodeError as e:
        raise FdrGcnConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(document, dict):
        raise FdrGcnConfigError(f"Config file {path} must hold a JSON object")
    return document  # type: ignore[reportUnknownVariableType]


# Stage seed fields of each section, derived by PipelineConfig.with_seed.
_STAGE_SEED_FIELDS = {
    "walk": ("rng_seed",),
    "embedding": ("rng_seed",),
    "gcn": ("weight_init_seed",),
    "campaign": ("workload_seed", "campaign_seed"),
    "labels": ("seed",),
}


def _fan_out_seed(config: PipelineConfig) -> PipelineConfig:
    """Derive stage seeds from the base seed, keeping those set explicitly."""
    derived = config.with_seed(config.seed)
    updates: dict[str, BaseModel] = {}
    for section, fields in _STAGE_SEED_FIELDS.items():
        given: BaseModel = getattr(config, section)
        kept = {name: getattr(given, name) for name in fields if name in given.model_fields_set}
        if kept:
            updates[section] = getattr(derived, section).model_copy(update=kept)
    return derived.model_copy(update=updates)


def load_pipeline_config(
    path: Path | None = None,
    *,
    seed: int | None = None,
    workdir: Path | None = None,
    netlist: Path | None = None,
) -> PipelineConfig:
    """Load pipeline configuration.

    Precedence: explicit arguments (CLI flags) > FDRGCN_* environment
    variables > config file > defaults. A base seed from the flags or the
    environment re-derives every stage seed; one from the config file keeps
    the stage seeds the file sets explicitly.
    """
    load_dotenv_if_exists()

    document: JSONDict = _read_config_document(path) if path is not None else {}

    env_workdir = os.environ.get("FDRGCN_WORKDIR")
    env_netlist = os.environ.get("FDRGCN_NETLIST")
    env_seed = os.environ.get("FDRGCN_SEED")
    if env_workdir:
        document["workdir"] = env_workdir
    if env_netlist:
        document["netlist"] = env_netlist
    if workdir is not None:
        document["workdir"] = str(workdir)
    if netlist is not None:
        document["netlist"] = str(netlist)

    try:
        config = PipelineConfig.model_validate(document)
        if seed is None and env_seed is not None:
            seed = int(env_seed)
    except (ValidationError, ValueError) as e:
        logger.error(
            f"Invalid pipeline configuration: {e}",
            extra={"path": str(path) if path else None, "error": str(e)},
        )
        raise FdrGcnConfigError(f"Invalid pipeline configuration: {e}")

    if seed is not None:
        config = config.with_seed(seed)
    elif "seed" in document:
        config = _fan_out_seed(config)

    # Relative netlist paths in a config file are relative to that file.
    if path is not None and config.netlist is not None and netlist is None:
        if not config.netlist.is_absolute() and not env_netlist:
            config = config.model_copy(update={"netlist": path.parent / config.netlist})

    return config
