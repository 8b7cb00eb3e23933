"""Tests for the pipeline stages."""

from pathlib import Path

import numpy as np
import pytest

from src import bundled_circuit
from src.config import (
    CampaignConfig,
    EmbeddingConfig,
    GcnConfig,
    LabelSelection,
    PipelineConfig,
    ReportConfig,
    WalkConfig,
)
from src.evaluation import confidence_interval, read_report_sections
from src.exceptions import FdrGcnConfigError, GcnError, StageMissingError
from src.gcn import read_training_csv
from src.graph import NodeKind, import_gml
from src.injection import exhaustive_fdr, read_fdr_csv
from src.netlist import load_netlist
from src.pipeline import (
    STAGES,
    cmd_embed,
    cmd_graph,
    cmd_labels,
    cmd_pipeline,
    cmd_predict,
    cmd_report,
    cmd_train,
)
from src.simulator import load_workload
from src.workspace import PLOT_FILES, Workspace


def small_config(netlist: Path, workdir: Path, **updates) -> PipelineConfig:
    """A quick sr4-sized configuration."""
    config = PipelineConfig(
        netlist=netlist,
        workdir=workdir,
        walk=WalkConfig(walks_per_node=4, walk_length=10),
        embedding=EmbeddingConfig(dimension=8, epochs=1),
        gcn=GcnConfig(layer_dims=[8, 4, 2, 1], epochs=30),
        campaign=CampaignConfig(mode="exhaustive", n_cycles=64),
        labels=LabelSelection(count=2),
        report=ReportConfig(filter_outliers=True),
    )
    return config.model_copy(update=updates)


class TestStages:
    """Test the individual stages."""

    def test_stage_order(self):
        """Stages run graph -> embed -> labels -> train -> predict -> report."""
        assert list(STAGES) == ["graph", "embed", "labels", "train", "predict", "report"]

    def test_graph_stage(self, sr4_path, workdir):
        """The graph stage writes the GML and the elaborated netlist."""
        result = cmd_graph(small_config(sr4_path, workdir))
        ws = Workspace(workdir, "sr4")

        assert result.circuit == "sr4"
        assert result.artifacts == [ws.gml, ws.netlist]
        assert import_gml(ws.gml.read_text(encoding="utf-8")).size == 7
        assert load_netlist(ws.netlist) == load_netlist(sr4_path)

    def test_graph_needs_netlist(self, workdir):
        """Without a netlist the graph stage is a configuration error."""
        with pytest.raises(FdrGcnConfigError, match="no netlist"):
            cmd_graph(PipelineConfig(workdir=workdir))

    def test_stage_missing(self, sr4_path, workdir):
        """Stages fail with the name of the missing upstream stage."""
        cfg = small_config(sr4_path, workdir)
        with pytest.raises(StageMissingError) as exc_info:
            cmd_embed(cfg)
        assert exc_info.value.stage == "graph"

        cmd_graph(cfg)
        cmd_embed(cfg)
        with pytest.raises(StageMissingError) as exc_info:
            cmd_predict(cfg)
        assert exc_info.value.stage == "train"

    def test_exhaustive_labels(self, sr4_path, workdir):
        """Exhaustive labels equal exhaustive_fdr on the written workload."""
        cfg = small_config(sr4_path, workdir)
        cmd_graph(cfg)
        cmd_labels(cfg)
        ws = Workspace(workdir, "sr4")

        n = load_netlist(sr4_path)
        w = load_workload(ws.workload, n)
        assert w.n_cycles == 64
        assert read_fdr_csv(ws.labels, "simulated") == exhaustive_fdr(n, w)

    def test_workload_file(self, sr4_path, workdir, tmp_path):
        """A configured workload file replaces the random stimulus."""
        stimulus = tmp_path / "stim.hex"
        stimulus.write_text("1\n0\n0\n1\n", encoding="utf-8")
        cfg = small_config(
            sr4_path,
            workdir,
            campaign=CampaignConfig(mode="exhaustive", workload_file=stimulus),
        )
        cmd_graph(cfg)
        cmd_labels(cfg)

        labels = read_fdr_csv(Workspace(workdir, "sr4").labels, "simulated")
        assert [e.injections for e in labels.entries] == [4, 4, 4, 4]
        assert [e.failures for e in labels.entries] == [1, 2, 3, 4]

    def test_embedding_width_must_match(self, sr4_path, workdir):
        """layer_dims[0] has to equal the embedding dimension."""
        cfg = small_config(sr4_path, workdir)
        for stage in ("graph", "embed", "labels"):
            STAGES[stage](cfg)
        wrong = cfg.model_copy(update={"gcn": GcnConfig(layer_dims=[16, 4, 2, 1], epochs=1)})
        with pytest.raises(FdrGcnConfigError, match="layer_dims"):
            cmd_train(wrong)


class TestPipeline:
    """Test complete pipeline runs."""

    def test_artifacts(self, sr4_path, workdir):
        """A full run writes every artifact and a consistent report."""
        results = cmd_pipeline(small_config(sr4_path, workdir))
        ws = Workspace(workdir, "sr4")

        assert [r.stage for r in results] == list(STAGES)
        for path in (ws.gml, ws.embeddings, ws.labels, ws.weights, ws.loss, ws.predictions):
            assert path.exists()
        assert ws.report.exists() and ws.report_filtered.exists()
        assert all(ws.plot_file(name).exists() for name in PLOT_FILES)

        predicted = read_fdr_csv(ws.predictions, "predicted")
        simulated = read_fdr_csv(ws.labels, "simulated")
        sections = read_report_sections(ws.report.read_text(encoding="utf-8"))
        ci = sections["ci"].set_index("series")
        assert ci.loc["predicted", "mean"] == pytest.approx(
            confidence_interval(predicted.values()).mean, abs=1e-8
        )
        assert ci.loc["simulated", "half_width"] == pytest.approx(
            confidence_interval(simulated.values()).half_width, abs=1e-8
        )
        assert len(read_training_csv(ws.training).names) == 2
        assert len(ws.loss.read_text(encoding="utf-8").splitlines()) == 31

    def test_sr4_defaults(self, sr4_path, workdir):
        """Default settings run end to end on the four flip-flop sr4."""
        results = cmd_pipeline(PipelineConfig(netlist=sr4_path, workdir=workdir))
        ws = Workspace(workdir, "sr4")

        assert [r.stage for r in results] == list(STAGES)
        for path in (ws.gml, ws.embeddings, ws.labels, ws.weights, ws.predictions, ws.report):
            assert path.exists()
        assert len(read_training_csv(ws.training).names) == 4

    def test_deterministic(self, sr4_path, tmp_path):
        """Two runs with the same configuration write identical files."""
        first, second = tmp_path / "a", tmp_path / "b"
        cmd_pipeline(small_config(sr4_path, first))
        cmd_pipeline(small_config(sr4_path, second))

        for name in ("sr4.gml", "embeddings.csv", "labels.csv", "predictions.csv", "report.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_exclude_training(self, sr4_path, workdir):
        """Held-out reports leave the training flip-flops out of the pairs."""
        cfg = small_config(sr4_path, workdir, report=ReportConfig(exclude_training=True))
        cmd_pipeline(cfg)
        ws = Workspace(workdir, "sr4")

        trained = set(read_training_csv(ws.training).names)
        sections = read_report_sections(ws.report.read_text(encoding="utf-8"))
        assert set(sections["pairs"]["flipflop"]).isdisjoint(trained)
        assert set(sections["training_fit"]["flipflop"]) == trained

    def test_report_rejects_non_flipflop_training_node(self, sr4_path, workdir):
        """A training file pointing at a non-flip-flop node stops the report."""
        cfg = small_config(sr4_path, workdir)
        cmd_pipeline(cfg)
        ws = Workspace(workdir, "sr4")
        g = import_gml(ws.gml.read_text(encoding="utf-8"))
        gate = next(v.index for v in g.nodes if v.kind is not NodeKind.FLIPFLOP)
        training = read_training_csv(ws.training)
        name = training.names[0]
        ws.training.write_text(
            f"flipflop,node_id,label\n{name},{gate},0.5\n", encoding="utf-8"
        )

        with pytest.raises(GcnError, match="not a flip-flop"):
            cmd_report(cfg)


@pytest.mark.slow
class TestLfsrCmpRun:
    """End-to-end run on the 50 flip-flop circuit."""

    def test_training_fit(self, workdir):
        """Eight labeled flip-flops: tenfold loss drop and labels fit within 0.15."""
        cfg = PipelineConfig(
            netlist=bundled_circuit("lfsr_cmp"),
            workdir=workdir,
            campaign=CampaignConfig(n_cycles=256, injections_per_ff=64),
            labels=LabelSelection(count=8),
        )
        cmd_pipeline(cfg)
        ws = Workspace(workdir, "lfsr_cmp")

        losses = np.loadtxt(ws.loss, delimiter=",", skiprows=1)[:, 1]
        assert losses[-1] < 0.1 * losses[0]

        training = read_training_csv(ws.training)
        predicted = read_fdr_csv(ws.predictions, "predicted").as_dict()
        for name, label in zip(training.names, training.labels):
            assert abs(predicted[name] - label) <= 0.15

        sections = read_report_sections(ws.report.read_text(encoding="utf-8"))
        assert len(sections["ci"]) == 2
        assert len(sections["histogram"]) == 20
        assert len(sections["sorted"]) == 50
