"""Tests for node2vec walks and skip-gram features."""

from unittest.mock import patch

import numpy as np
import pytest
from scipy.stats import chisquare

from src import embedding
from src.config import EmbeddingConfig, WalkConfig
from src.embedding import (
    FeatureMatrix,
    embed,
    generate_walks,
    read_embeddings_csv,
    train_skipgram,
    write_embeddings_csv,
)
from src.exceptions import EmbeddingError
from src.graph import CircuitGraph, GraphNode, NodeKind, build_graph


def _graph(n_nodes: int, edges) -> CircuitGraph:
    nodes = [GraphNode(index=i, name=f"n{i}", kind=NodeKind.GATE) for i in range(n_nodes)]
    return CircuitGraph(nodes=nodes, directed_edges=list(edges))


@pytest.fixture
def small_embedding() -> EmbeddingConfig:
    return EmbeddingConfig(dimension=4, epochs=2, batch_size=16)


class TestGenerateWalks:
    """Test generate_walks."""

    def test_count_and_order(self):
        """walks_per_node walks per node, round-major, nodes in index order."""
        g = _graph(3, [(0, 1), (1, 2)])
        walks = generate_walks(g, WalkConfig(walks_per_node=2, walk_length=5))

        assert len(walks) == 6
        assert [w[0] for w in walks] == [0, 1, 2, 0, 1, 2]
        assert all(len(w) == 5 for w in walks)

    def test_steps_follow_edges(self, sr4):
        """Consecutive walk nodes are adjacent in the symmetrized graph."""
        g = build_graph(sr4)
        neighbors = g.neighbors()
        for walk in generate_walks(g, WalkConfig(walks_per_node=3, walk_length=8)):
            for a, b in zip(walk, walk[1:]):
                assert b in neighbors[a]

    def test_isolated_node(self):
        """An isolated node yields walks of length 1."""
        walks = generate_walks(_graph(2, []), WalkConfig(walks_per_node=3, walk_length=10))
        assert walks == [[0], [1]] * 3

    def test_length_one(self):
        """walk_length 1 gives the start nodes only."""
        walks = generate_walks(_graph(2, [(0, 1)]), WalkConfig(walks_per_node=1, walk_length=1))
        assert walks == [[0], [1]]

    def test_empty_graph(self):
        """Walks on an empty graph are an error."""
        with pytest.raises(EmbeddingError, match="empty graph"):
            generate_walks(_graph(0, []), WalkConfig())

    def test_deterministic(self, lfsr_cmp):
        """The same seed gives the same walks; another seed differs."""
        g = build_graph(lfsr_cmp)
        cfg = WalkConfig(walks_per_node=2, walk_length=12, rng_seed=7)

        assert generate_walks(g, cfg) == generate_walks(g, cfg)
        assert generate_walks(g, cfg) != generate_walks(
            g, cfg.model_copy(update={"rng_seed": 8})
        )

    def test_workers_match_serial(self, lfsr_cmp):
        """Threaded generation returns the serial result."""
        g = build_graph(lfsr_cmp)
        cfg = WalkConfig(walks_per_node=2, walk_length=12, rng_seed=3)
        assert generate_walks(g, cfg.model_copy(update={"workers": 4})) == generate_walks(
            g, cfg
        )

    def test_low_return_parameter_backtracks(self):
        """A tiny p makes the walk bounce between the first two nodes."""
        g = _graph(4, [(0, 1), (1, 2), (1, 3)])
        cfg = WalkConfig(walks_per_node=5, walk_length=20, return_param_p=1e-6)
        for walk in generate_walks(g, cfg):
            if walk[0] == 0:
                assert walk == [0, 1] * 10

    def test_star_first_step_uniform(self):
        """From a star center with p=q=1 the first step is uniform over the leaves."""
        g = _graph(5, [(0, leaf) for leaf in range(1, 5)])
        walks = generate_walks(g, WalkConfig(walks_per_node=10000, walk_length=2))
        first_steps = [walk[1] for walk in walks if walk[0] == 0]
        counts = np.bincount(first_steps, minlength=5)[1:]

        assert counts.sum() == 10000
        assert np.all((counts / 10000 >= 0.23) & (counts / 10000 <= 0.27))
        assert chisquare(counts).pvalue > 0.001

    def test_workers_walk_each_job_once(self, lfsr_cmp):
        """Threaded generation runs every walk exactly once."""
        g = build_graph(lfsr_cmp)
        cfg = WalkConfig(walks_per_node=2, walk_length=12, workers=4)
        with patch("src.embedding._walk", wraps=embedding._walk) as walk:
            walks = generate_walks(g, cfg)

        assert walk.call_count == len(walks) == 2 * g.size

    def test_warm_builds_every_edge_table(self, sr4):
        """warm() fills one table per directed edge of the symmetrized graph."""
        g = build_graph(sr4)
        tables = embedding._TransitionTables(g.neighbors(), 1.0, 1.0)
        tables.warm()
        assert tables.cached_edges == sum(len(n) for n in g.neighbors())


class TestTrainSkipgram:
    """Test train_skipgram."""

    def test_shape_and_finite(self, small_embedding):
        """The result is N x D and finite."""
        walks = generate_walks(_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)]), WalkConfig())
        x = train_skipgram(walks, small_embedding, 5)

        assert (x.rows, x.cols) == (5, 4)
        assert np.all(np.isfinite(x.values))

    def test_zero_epochs_returns_initialization(self):
        """With zero epochs the features are the seeded uniform initialization."""
        cfg = EmbeddingConfig(dimension=3, epochs=0, rng_seed=9)
        x = train_skipgram([[0, 1], [1, 0]], cfg, 2)
        expected = np.random.default_rng(9).uniform(-0.5 / 3, 0.5 / 3, size=(2, 3))
        np.testing.assert_array_equal(x.values, expected)

    def test_deterministic(self, small_embedding):
        """Equal inputs and seeds give bit-identical features."""
        walks = [[0, 1, 2, 1, 0], [2, 1, 0, 1, 2]]
        a = train_skipgram(walks, small_embedding, 3)
        b = train_skipgram(walks, small_embedding, 3)
        np.testing.assert_array_equal(a.values, b.values)

    def test_training_moves_vectors(self, small_embedding):
        """Training changes the initialization."""
        walks = [[0, 1, 2, 1, 0], [2, 1, 0, 1, 2]]
        trained = train_skipgram(walks, small_embedding, 3)
        initial = train_skipgram(walks, small_embedding.model_copy(update={"epochs": 0}), 3)
        assert not np.array_equal(trained.values, initial.values)

    def test_empty_walks(self, small_embedding):
        """An empty corpus is rejected."""
        with pytest.raises(EmbeddingError, match="no walks"):
            train_skipgram([], small_embedding, 3)

    def test_index_out_of_range(self, small_embedding):
        """Walks naming nodes >= N are rejected."""
        with pytest.raises(EmbeddingError, match="out of range"):
            train_skipgram([[0, 5]], small_embedding, 3)

    def test_repeated_rows_move_by_mean(self):
        """A row hit several times in one batch moves by the mean update."""
        target = np.zeros((3, 2))
        rows = np.array([0, 0, 1])
        updates = np.array([[1.0, 1.0], [3.0, 3.0], [2.0, 0.0]])
        embedding._apply_row_means(target, rows, updates, 0.5)

        np.testing.assert_array_equal(target, [[1.0, 1.0], [1.0, 0.0], [0.0, 0.0]])

    def test_barbell_cliques(self):
        """Barbell nodes are closer to their own clique than to the other one."""
        left = [(a, b) for a in range(5) for b in range(a + 1, 5)]
        right = [(a + 5, b + 5) for a, b in left]
        g = _graph(10, left + right + [(4, 5)])
        same = np.array([[(a < 5) == (b < 5) for b in range(10)] for a in range(10)])
        off_diagonal = ~np.eye(10, dtype=bool)

        for seed in range(5):
            walks = generate_walks(g, WalkConfig(rng_seed=seed))
            x = train_skipgram(walks, EmbeddingConfig(rng_seed=seed), 10).values
            unit = x / np.linalg.norm(x, axis=1, keepdims=True)
            cosine = unit @ unit.T

            within = cosine[same & off_diagonal].mean()
            across = cosine[~same].mean()
            assert within > across, f"seed {seed}: {within} <= {across}"


class TestEmbed:
    """Test embed and the embeddings CSV."""

    def test_sr4(self, sr4, small_embedding):
        """Every node of sr4 gets a feature row."""
        x = embed(build_graph(sr4), WalkConfig(walks_per_node=2, walk_length=6), small_embedding)
        assert (x.rows, x.cols) == (7, 4)

    def test_sr4_defaults_bounded(self, sr4):
        """Default settings on sr4 give a bounded 7 x 16 matrix."""
        x = embed(build_graph(sr4), WalkConfig(), EmbeddingConfig())

        assert (x.rows, x.cols) == (7, 16)
        assert np.all(np.abs(x.values) < 100)

    def test_csv(self, tmp_path):
        """The CSV has node_id,f0.. columns and reads back within 9 digits."""
        x = FeatureMatrix(np.array([[0.125, -1.0 / 3.0], [2.0, 0.0]]))
        path = tmp_path / "embeddings.csv"
        write_embeddings_csv(x, path)

        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "node_id,f0,f1"
        assert lines[1] == "0,0.125,-0.333333333"
        np.testing.assert_allclose(read_embeddings_csv(path).values, x.values, rtol=1e-8)

    def test_csv_rejects_gaps(self, tmp_path):
        """Rows must be node_id 0..N-1 in order."""
        path = tmp_path / "embeddings.csv"
        path.write_text("node_id,f0\n0,1.0\n2,0.5\n", encoding="utf-8")
        with pytest.raises(EmbeddingError, match="0..N-1"):
            read_embeddings_csv(path)

    def test_csv_malformed(self, tmp_path):
        """Empty files and non-numeric features are embedding errors."""
        path = tmp_path / "embeddings.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(EmbeddingError, match="malformed CSV"):
            read_embeddings_csv(path)

        path.write_text("node_id,f0\n0,abc\n", encoding="utf-8")
        with pytest.raises(EmbeddingError, match="non-numeric"):
            read_embeddings_csv(path)
