"""Bias-free graph convolutional network with masked regression training.

Layers follow H^{l+1} = act(S H^l W^l) with S the symmetric normalized
adjacency. Hidden layers use tanh, the single-unit output layer the
logistic function.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy.special import expit

from .config import DEFAULT_LABEL_COUNT, GcnConfig, LabelSelection
from .embedding import FeatureMatrix
from .exceptions import FdrGcnConfigError, FdrGcnInputError, GcnError
from .graph import CircuitGraph, NormalizedAdjacency
from .injection import FdrEntry, FdrTable
from .types import FloatArray, IntArray
from .workspace import read_csv_file, read_text_file

logger = get_logger(__name__)

WEIGHTS_FORMAT = "fdr-gcn-weights"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class GcnModel:
    """Weight matrices W^l of shape (layer_dims[l], layer_dims[l+1])."""

    weights: Tuple[FloatArray, ...]

    @property
    def layer_dims(self) -> List[int]:
        return [int(self.weights[0].shape[0])] + [int(w.shape[1]) for w in self.weights]

    @property
    def parameter_count(self) -> int:
        return sum(int(w.size) for w in self.weights)


@dataclass(frozen=True)
class TrainingSet:
    """Labeled flip-flop nodes: ``indices[k]`` carries label ``labels[k]``."""

    indices: IntArray
    labels: FloatArray
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.indices.shape != self.labels.shape:
            raise GcnError("training indices and labels differ in length")

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class ForwardCache:
    """Intermediates of one forward pass.

    ``inputs[l]`` is H^l (inputs[0] = X), ``aggregates[l]`` is S H^l and
    ``outputs[l]`` is the activation of layer l, so outputs[-1] is Z.
    """

    inputs: Tuple[FloatArray, ...]
    aggregates: Tuple[FloatArray, ...]
    outputs: Tuple[FloatArray, ...]

    @property
    def predictions(self) -> FloatArray:
        return self.outputs[-1]


@dataclass(frozen=True)
class AdamState:
    first_moment: Tuple[FloatArray, ...]
    second_moment: Tuple[FloatArray, ...]
    step: int = 0

    @classmethod
    def zeros(cls, model: GcnModel) -> "AdamState":
        return cls(
            first_moment=tuple(np.zeros_like(w) for w in model.weights),
            second_moment=tuple(np.zeros_like(w) for w in model.weights),
        )


@dataclass(frozen=True)
class TrainingHistory:
    """Masked loss recorded at every epoch, before that epoch's update."""

    losses: Tuple[float, ...]

    @property
    def initial_loss(self) -> float | None:
        return self.losses[0] if self.losses else None

    @property
    def final_loss(self) -> float | None:
        return self.losses[-1] if self.losses else None


def init_weights(cfg: GcnConfig) -> GcnModel:
    """Glorot-uniform weights: W^l ~ U[-s, s], s = sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(cfg.weight_init_seed)
    weights: List[FloatArray] = []
    for fan_in, fan_out in zip(cfg.layer_dims[:-1], cfg.layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return GcnModel(weights=tuple(weights))


def _features(x: FeatureMatrix | FloatArray) -> FloatArray:
    return np.asarray(x.values if isinstance(x, FeatureMatrix) else x, dtype=np.float64)


def forward(
    s: NormalizedAdjacency, x: FeatureMatrix | FloatArray, m: GcnModel
) -> Tuple[FloatArray, ForwardCache]:
    """Full-graph forward pass.

    Returns:
        (Z, cache) with Z of shape (N, 1), every entry in (0, 1)

    Raises:
        GcnError: If S, X and the weights do not chain
    """
    h = _features(x)
    if h.ndim != 2 or h.shape[0] != s.size:
        raise GcnError(f"feature matrix shape {h.shape} does not match {s.size} nodes")
    if h.shape[1] != m.layer_dims[0]:
        raise GcnError(f"feature dimension {h.shape[1]} != input dimension {m.layer_dims[0]}")

    inputs: List[FloatArray] = []
    aggregates: List[FloatArray] = []
    outputs: List[FloatArray] = []
    last = len(m.weights) - 1
    for layer, w in enumerate(m.weights):
        if w.shape[0] != h.shape[1]:
            raise GcnError(f"layer {layer}: weight rows {w.shape[0]} != width {h.shape[1]}")
        inputs.append(h)
        aggregated = np.asarray(s.matrix @ h)
        aggregates.append(aggregated)
        pre = aggregated @ w
        h = expit(pre) if layer == last else np.tanh(pre)
        outputs.append(h)
    return h, ForwardCache(tuple(inputs), tuple(aggregates), tuple(outputs))


def _check_mask(t: TrainingSet, n_nodes: int) -> None:
    if t.size == 0:
        raise GcnError("training mask is empty")
    if np.any(t.indices < 0) or np.any(t.indices >= n_nodes):
        raise GcnError(f"training index out of range for {n_nodes} nodes")


def masked_mse_loss(z: FloatArray, t: TrainingSet) -> float:
    """Mean of (Z_i - label_i)^2 over the labeled nodes."""
    _check_mask(t, z.shape[0])
    residual = z[t.indices, 0] - t.labels
    return float(np.mean(residual * residual))


def backward(
    cache: ForwardCache, t: TrainingSet, s: NormalizedAdjacency, m: GcnModel
) -> List[FloatArray]:
    """Analytic gradients of :func:`masked_mse_loss` for every W^l.

    Uses S^T = S when pushing errors back through an aggregation.

    Raises:
        GcnError: If the cache does not belong to ``m`` and ``s``
    """
    if len(cache.outputs) != len(m.weights):
        raise GcnError("forward cache does not match the model depth")
    for layer, w in enumerate(m.weights):
        if cache.aggregates[layer].shape != (s.size, w.shape[0]):
            raise GcnError(f"forward cache is stale at layer {layer}")

    z = cache.predictions
    _check_mask(t, z.shape[0])

    d_out = np.zeros_like(z)
    np.add.at(d_out[:, 0], t.indices, 2.0 * (z[t.indices, 0] - t.labels) / t.size)
    d_pre = d_out * z * (1.0 - z)

    grads: List[FloatArray] = [np.empty(0)] * len(m.weights)
    for layer in range(len(m.weights) - 1, -1, -1):
        grads[layer] = cache.aggregates[layer].T @ d_pre
        if layer == 0:
            break
        d_hidden = np.asarray(s.matrix @ (d_pre @ m.weights[layer].T))
        h = cache.inputs[layer]
        d_pre = d_hidden * (1.0 - h * h)
    return grads


def adam_step(
    m: GcnModel, grads: Sequence[FloatArray], state: AdamState, cfg: GcnConfig
) -> Tuple[GcnModel, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    step = state.step + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    weights: List[FloatArray] = []
    first: List[FloatArray] = []
    second: List[FloatArray] = []
    for w, g, m1, m2 in zip(m.weights, grads, state.first_moment, state.second_moment):
        m1 = b1 * m1 + (1.0 - b1) * g
        m2 = b2 * m2 + (1.0 - b2) * (g * g)
        m_hat = m1 / (1.0 - b1**step)
        v_hat = m2 / (1.0 - b2**step)
        weights.append(w - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon))
        first.append(m1)
        second.append(m2)
    return GcnModel(tuple(weights)), AdamState(tuple(first), tuple(second), step)


def train(
    s: NormalizedAdjacency,
    x: FeatureMatrix | FloatArray,
    t: TrainingSet,
    cfg: GcnConfig,
) -> Tuple[GcnModel, TrainingHistory]:
    """Full-batch training: ``cfg.epochs`` rounds of forward, backward and Adam."""
    model = init_weights(cfg)
    state = AdamState.zeros(model)
    losses: List[float] = []
    for epoch in range(cfg.epochs):
        z, cache = forward(s, x, model)
        losses.append(masked_mse_loss(z, t))
        grads = backward(cache, t, s, model)
        model, state = adam_step(model, grads, state, cfg)
        if epoch % 500 == 0:
            logger.debug(f"Epoch {epoch}: loss {losses[-1]:.6g}", extra={"epoch": epoch})

    if not all(np.all(np.isfinite(w)) for w in model.weights):
        raise GcnError("training diverged (non-finite weights)")

    history = TrainingHistory(tuple(losses))
    logger.info(
        f"Trained GCN for {cfg.epochs} epochs on {t.size} labeled nodes",
        extra={
            "epochs": cfg.epochs,
            "labeled": t.size,
            "initial_loss": history.initial_loss,
            "final_loss": history.final_loss,
        },
    )
    return model, history


def predict(
    s: NormalizedAdjacency,
    x: FeatureMatrix | FloatArray,
    m: GcnModel,
    targets: Sequence[int],
    names: Sequence[str],
) -> FdrTable:
    """Predicted FDR of each target node, named by ``names``."""
    if len(targets) != len(names):
        raise GcnError("targets and names differ in length")
    for index in targets:
        if not 0 <= index < s.size:
            raise GcnError(f"target index {index} out of range for {s.size} nodes")
    z, _ = forward(s, x, m)
    return FdrTable(
        source="predicted",
        entries=[
            FdrEntry(flipflop=name, injections=0, failures=0, fdr=float(z[index, 0]))
            for index, name in zip(targets, names)
        ],
    )


# --- Training label selection ---


def select_training_set(
    labels: FdrTable, graph: CircuitGraph, selection: LabelSelection
) -> TrainingSet:
    """Pick the labeled flip-flops.

    An explicit list is used as given. Otherwise ``count`` flip-flops
    (default: five, or every flip-flop when there are fewer) are drawn, one
    from each of ``count`` equal-size strata of the simulated FDR ranking.
    The result is in label-table order.

    Raises:
        FdrGcnConfigError: On unknown flip-flops or a count above the
            flip-flop total
    """
    ff_nodes = graph.flipflop_nodes()
    fdr = labels.as_dict()
    known = [name for name in labels.flipflops if name in ff_nodes]

    if selection.flipflops is not None:
        unknown = [name for name in selection.flipflops if name not in ff_nodes or name not in fdr]
        if unknown:
            raise FdrGcnConfigError(f"training flip-flops {unknown} are not labeled flip-flops")
        chosen = set(selection.flipflops)
    else:
        count = selection.count
        if count is None:
            count = min(DEFAULT_LABEL_COUNT, len(known))
        if count == 0:
            raise FdrGcnConfigError("no labeled flip-flops to train on")
        if count > len(known):
            raise FdrGcnConfigError(
                f"cannot select {count} training flip-flops out of {len(known)}"
            )
        rng = np.random.default_rng(selection.seed)
        ranking = sorted(known, key=lambda name: (fdr[name], name))
        chosen = set()
        for stratum in np.array_split(np.arange(len(ranking)), count):
            chosen.add(ranking[int(stratum[rng.integers(stratum.size)])])

    names = tuple(name for name in labels.flipflops if name in chosen)
    logger.info(
        f"Selected {len(names)} training flip-flops",
        extra={"flipflops": list(names), "seed": selection.seed},
    )
    return TrainingSet(
        indices=np.array([ff_nodes[name] for name in names], dtype=np.int64),
        labels=np.array([fdr[name] for name in names], dtype=np.float64),
        names=names,
    )


def check_training_nodes(t: TrainingSet, graph: CircuitGraph) -> None:
    """Every training index must be a flip-flop node, under its own name if named.

    Raises:
        GcnError: On an index that is not a flip-flop node of ``graph``
    """
    by_index = {index: name for name, index in graph.flipflop_nodes().items()}
    for k, index in enumerate(t.indices.tolist()):
        if index not in by_index:
            raise GcnError(f"training node {index} is not a flip-flop")
        if t.names and t.names[k] != by_index[index]:
            actual = by_index[index]
            raise GcnError(
                f"training node {index} is flip-flop {actual!r}, not {t.names[k]!r}"
            )


def write_training_csv(t: TrainingSet, path: Path) -> None:
    frame = pd.DataFrame({"flipflop": list(t.names), "node_id": t.indices, "label": t.labels})
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_training_csv(path: Path) -> TrainingSet:
    frame = read_csv_file(path, FdrGcnInputError, dtype={"flipflop": str})
    if list(frame.columns) != ["flipflop", "node_id", "label"]:
        raise FdrGcnInputError(f"{path}: expected header flipflop,node_id,label")
    try:
        indices = frame["node_id"].to_numpy(dtype=np.int64)
        labels = frame["label"].to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise FdrGcnInputError(f"{path}: invalid training row: {e}")
    return TrainingSet(indices=indices, labels=labels, names=tuple(frame["flipflop"]))


def write_loss_csv(history: TrainingHistory, path: Path) -> None:
    frame = pd.DataFrame({"epoch": np.arange(len(history.losses)), "loss": history.losses})
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")


# --- Weights document ---


class WeightsDocument(BaseModel):
    """Serialized model: dims, seeds and row-major weights."""

    model_config = ConfigDict(extra="forbid")

    format: str = WEIGHTS_FORMAT
    version: int = WEIGHTS_VERSION
    layer_dims: List[int]
    hidden_activation: str
    output_activation: str
    weight_init_seed: int
    epochs: int
    learning_rate: float
    weights: List[List[List[float]]]


def save_weights(path: Path, m: GcnModel, cfg: GcnConfig) -> None:
    """Write the weights as JSON; floats use the shortest exact repr."""
    document = WeightsDocument(
        layer_dims=m.layer_dims,
        hidden_activation=cfg.hidden_activation,
        output_activation=cfg.output_activation,
        weight_init_seed=cfg.weight_init_seed,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        weights=[w.tolist() for w in m.weights],
    )
    path.write_text(json.dumps(document.model_dump(), indent=2) + "\n", encoding="utf-8")


def load_weights(path: Path) -> GcnModel:
    """Load a weights file written by :func:`save_weights`, bit-exactly.

    Raises:
        GcnError: On unreadable files, invalid documents, fewer than two
            weight matrices or shapes that do not chain into ``layer_dims``
    """
    text = read_text_file(path, GcnError, "weights")
    try:
        document = WeightsDocument.model_validate(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as e:
        raise GcnError(f"{path}: invalid weights document: {e}")
    if document.format != WEIGHTS_FORMAT:
        raise GcnError(f"{path}: unexpected format '{document.format}'")
    if len(document.weights) < 2:
        raise GcnError(
            f"{path}: a model needs at least two weight matrices, got {len(document.weights)}"
        )

    try:
        weights = tuple(np.array(w, dtype=np.float64) for w in document.weights)
    except ValueError as e:
        raise GcnError(f"{path}: ragged weight matrix: {e}")
    if any(w.ndim != 2 or w.size == 0 for w in weights):
        raise GcnError(f"{path}: every weight must be a non-empty matrix")
    if any(a.shape[1] != b.shape[0] for a, b in zip(weights, weights[1:])):
        raise GcnError(f"{path}: consecutive weight shapes do not chain")

    model = GcnModel(weights=weights)
    if model.layer_dims != document.layer_dims or model.layer_dims[-1] != 1:
        raise GcnError(f"{path}: weight shapes do not match layer_dims {document.layer_dims}")
    return model
