"""node2vec features: biased second-order random walks and skip-gram training."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from fastmcp.utilities.logging import get_logger
from scipy.special import expit

from .config import EmbeddingConfig, WalkConfig
from .exceptions import EmbeddingError
from .graph import CircuitGraph
from .types import FloatArray, Walk, WalkList
from .workspace import read_csv_file

logger = get_logger(__name__)


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D node features; row i belongs to node i."""

    values: FloatArray

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])


class _TransitionTables:
    """Cumulative transition weights of the second-order walk.

    For a walk that moved prev -> cur, the next node x gets weight 1/p when
    x == prev, 1 when x neighbors prev, 1/q otherwise.
    """

    def __init__(self, neighbors: List[List[int]], p: float, q: float):
        self.neighbors = neighbors
        self._neighbor_sets = [set(n) for n in neighbors]
        self._p = p
        self._q = q
        self._edge_tables: Dict[Tuple[int, int], FloatArray] = {}

    def edge_table(self, prev: int, cur: int) -> FloatArray:
        key = (prev, cur)
        table = self._edge_tables.get(key)
        if table is None:
            prev_neighbors = self._neighbor_sets[prev]
            weights = [
                1.0 / self._p if x == prev else 1.0 if x in prev_neighbors else 1.0 / self._q
                for x in self.neighbors[cur]
            ]
            table = np.cumsum(np.asarray(weights, dtype=np.float64))
            self._edge_tables[key] = table
        return table

    def warm(self) -> None:
        """Build the table of every directed edge of the symmetrized graph."""
        for prev, adjacent in enumerate(self.neighbors):
            for cur in adjacent:
                self.edge_table(prev, cur)

    @property
    def cached_edges(self) -> int:
        return len(self._edge_tables)


def _sample(cumulative: FloatArray, rng: np.random.Generator) -> int:
    position = rng.random() * cumulative[-1]
    return min(int(np.searchsorted(cumulative, position, side="right")), cumulative.size - 1)


def _walk(
    tables: _TransitionTables, start: int, walk_index: int, cfg: WalkConfig
) -> Walk:
    # One generator per (seed, start, walk) so walks do not depend on scheduling.
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, start, walk_index]))
    walk = [start]
    first = tables.neighbors[start]
    if not first:
        return walk
    walk.append(first[int(rng.integers(len(first)))])
    while len(walk) < cfg.walk_length:
        prev, cur = walk[-2], walk[-1]
        choices = tables.neighbors[cur]
        walk.append(choices[_sample(tables.edge_table(prev, cur), rng)])
    return walk


def generate_walks(g: CircuitGraph, cfg: WalkConfig) -> WalkList:
    """Generate ``walks_per_node`` biased walks from every node.

    Walks run on the symmetrized graph and come out round by round, nodes in
    index order within a round. Isolated nodes give length-1 walks.

    Raises:
        EmbeddingError: If the graph is empty
    """
    if g.size == 0:
        raise EmbeddingError("cannot generate walks on an empty graph")

    tables = _TransitionTables(g.neighbors(), cfg.return_param_p, cfg.inout_param_q)
    if cfg.walk_length == 1:
        return [[v] for _ in range(cfg.walks_per_node) for v in range(g.size)]

    jobs = [(v, w) for w in range(cfg.walks_per_node) for v in range(g.size)]
    if cfg.workers > 1:
        # Fill every edge table up front; workers then only read the dict.
        tables.warm()
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            walks = list(pool.map(lambda job: _walk(tables, job[0], job[1], cfg), jobs))
    else:
        walks = [_walk(tables, v, w, cfg) for v, w in jobs]

    logger.info(
        f"Generated {len(walks)} walks",
        extra={"nodes": g.size, "walks": len(walks), "seed": cfg.rng_seed},
    )
    return walks


def _context_pairs(walks: Sequence[Walk], window: int) -> Tuple[np.ndarray, np.ndarray]:
    centers: List[int] = []
    contexts: List[int] = []
    for walk in walks:
        length = len(walk)
        for i, center in enumerate(walk):
            for j in range(max(0, i - window), min(length, i + window + 1)):
                if j != i:
                    centers.append(center)
                    contexts.append(walk[j])
    return np.asarray(centers, dtype=np.int64), np.asarray(contexts, dtype=np.int64)


def _apply_row_means(
    target: FloatArray, rows: np.ndarray, updates: FloatArray, lr: float
) -> None:
    # A row hit k times in one batch moves by the mean of its k updates.
    sums = np.zeros_like(target)
    np.add.at(sums, rows, updates)
    hits = np.bincount(rows, minlength=target.shape[0])
    touched = hits > 0
    target[touched] += lr * sums[touched] / hits[touched, None]


def train_skipgram(walks: Sequence[Walk], cfg: EmbeddingConfig, n_nodes: int) -> FeatureMatrix:
    """Skip-gram with negative sampling over the walk corpus.

    Maximizes log sigmoid(x_u . c_v) for pairs co-occurring within ``window``
    and log sigmoid(-x_u . c_n) for ``negatives_per_positive`` noise nodes
    drawn from the unigram distribution raised to 0.75. The learning rate
    decays linearly from ``learning_rate`` to ``min_learning_rate``.
    Within a mini-batch every row moves by the mean of its updates, so small
    graphs with many repeated rows per batch stay bounded.

    Raises:
        EmbeddingError: On empty walks, out-of-range node indices or a
            non-finite result
    """
    if not walks:
        raise EmbeddingError("no walks to train on")
    for walk in walks:
        for v in walk:
            if not 0 <= v < n_nodes:
                raise EmbeddingError(f"node index {v} out of range for {n_nodes} nodes")

    dim = cfg.dimension
    rng = np.random.default_rng(cfg.rng_seed)
    vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_nodes, dim))
    contexts_w = np.zeros((n_nodes, dim), dtype=np.float64)

    centers, contexts = _context_pairs(walks, cfg.window)
    if cfg.epochs == 0 or centers.size == 0:
        return FeatureMatrix(vectors)

    counts = np.bincount(np.concatenate([np.asarray(w) for w in walks]), minlength=n_nodes)
    noise = counts.astype(np.float64) ** 0.75
    noise /= noise.sum()

    total = cfg.epochs * centers.size
    done = 0
    k = cfg.negatives_per_positive
    for epoch in range(cfg.epochs):
        order = rng.permutation(centers.size)
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            decay = (cfg.learning_rate - cfg.min_learning_rate) * (done / total)
            lr = cfg.learning_rate - decay
            done += batch.size

            c, o = centers[batch], contexts[batch]
            negatives = rng.choice(n_nodes, size=(batch.size, k), p=noise)
            v_c = vectors[c]
            u_o = contexts_w[o]
            u_n = contexts_w[negatives]

            g_pos = 1.0 - expit(np.einsum("bd,bd->b", v_c, u_o))
            g_neg = -expit(np.einsum("bd,bkd->bk", v_c, u_n))

            grad_c = g_pos[:, None] * u_o + np.einsum("bk,bkd->bd", g_neg, u_n)
            grad_o = g_pos[:, None] * v_c
            grad_n = g_neg[:, :, None] * v_c[:, None, :]

            _apply_row_means(vectors, c, grad_c, lr)
            _apply_row_means(
                contexts_w,
                np.concatenate([o, negatives.ravel()]),
                np.concatenate([grad_o, grad_n.reshape(-1, dim)]),
                lr,
            )

        logger.debug(f"Skip-gram epoch {epoch + 1}/{cfg.epochs} done", extra={"lr": lr})

    if not np.all(np.isfinite(vectors)):
        raise EmbeddingError("skip-gram training diverged (non-finite features)")
    return FeatureMatrix(vectors)


def embed(g: CircuitGraph, wcfg: WalkConfig, ecfg: EmbeddingConfig) -> FeatureMatrix:
    """node2vec feature matrix of a circuit graph."""
    walks = generate_walks(g, wcfg)
    features = train_skipgram(walks, ecfg, g.size)
    logger.info(
        f"Embedded {g.size} nodes into {ecfg.dimension} dimensions",
        extra={"nodes": g.size, "dimension": ecfg.dimension},
    )
    return features


def write_embeddings_csv(x: FeatureMatrix, path: Path) -> None:
    """Write ``node_id,f0,...`` rows with 9 significant digits."""
    frame = pd.DataFrame(x.values, columns=[f"f{j}" for j in range(x.cols)])
    frame.insert(0, "node_id", np.arange(x.rows, dtype=np.int64))
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")


def read_embeddings_csv(path: Path) -> FeatureMatrix:
    """Read an embeddings CSV written by :func:`write_embeddings_csv`."""
    frame = read_csv_file(path, EmbeddingError)
    if frame.columns[0] != "node_id" or list(frame["node_id"]) != list(range(len(frame))):
        raise EmbeddingError(f"{path}: rows must be node_id 0..N-1 in order")
    try:
        values = frame.drop(columns="node_id").to_numpy(dtype=np.float64)
    except ValueError as e:
        raise EmbeddingError(f"{path}: non-numeric feature value: {e}")
    return FeatureMatrix(values)
