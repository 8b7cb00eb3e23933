"""Pipeline stages: graph, embed, labels, train, predict, report.

Every stage reads its inputs from the working directory and writes its
artifacts back there, so stages can be re-run one by one.
"""

from pathlib import Path
from typing import Callable, Dict, List

from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel

from .config import PipelineConfig
from .embedding import embed, read_embeddings_csv, write_embeddings_csv
from .evaluation import compare_report, write_plot_files, write_report
from .exceptions import FdrGcnConfigError, GmlError, NetlistError
from .gcn import (
    check_training_nodes,
    load_weights,
    predict,
    read_training_csv,
    save_weights,
    select_training_set,
    train,
    write_loss_csv,
    write_training_csv,
)
from .graph import (
    CircuitGraph,
    NormalizedAdjacency,
    adjacency_matrix,
    build_graph,
    export_gml,
    import_gml,
    normalize_adjacency,
)
from .injection import exhaustive_fdr, read_fdr_csv, run_campaign, write_fdr_csv
from .netlist import Netlist, load_netlist, parse_netlist, to_json_netlist
from .simulator import generate_workload, load_workload, write_workload
from .workspace import PLOT_FILES, Workspace, read_text_file

logger = get_logger(__name__)


class StageResult(BaseModel):
    """Artifacts written by one stage."""

    stage: str
    circuit: str
    artifacts: List[Path]


def _load_source_netlist(cfg: PipelineConfig) -> Netlist:
    if cfg.netlist is None:
        raise FdrGcnConfigError(
            "no netlist given (use --netlist, the config file or FDRGCN_NETLIST)"
        )
    return load_netlist(cfg.netlist)


def _stored_netlist(cfg: PipelineConfig) -> tuple[Netlist, Workspace]:
    """The elaborated netlist persisted by the graph stage."""
    root = Workspace(cfg.workdir, "")
    path = root.require(root.netlist, "graph")
    n = parse_netlist(read_text_file(path, NetlistError, "netlist"), format="json")
    return n, Workspace(cfg.workdir, n.name)


def _stored_graph(ws: Workspace) -> CircuitGraph:
    return import_gml(read_text_file(ws.require(ws.gml, "graph"), GmlError, "GML"))


def _operator(g: CircuitGraph) -> NormalizedAdjacency:
    return normalize_adjacency(adjacency_matrix(g))


def cmd_graph(cfg: PipelineConfig) -> StageResult:
    """Parse the netlist, build its graph and write ``<circuit>.gml``."""
    n = _load_source_netlist(cfg)
    ws = Workspace(cfg.workdir, n.name)
    ws.ensure()
    g = build_graph(n)
    ws.gml.write_text(export_gml(g), encoding="utf-8")
    ws.netlist.write_text(to_json_netlist(n), encoding="utf-8")
    logger.info(f"Wrote {ws.gml}", extra={"circuit": n.name, "path": str(ws.gml)})
    return StageResult(stage="graph", circuit=n.name, artifacts=[ws.gml, ws.netlist])


def cmd_embed(cfg: PipelineConfig) -> StageResult:
    """node2vec features of the stored graph."""
    n, ws = _stored_netlist(cfg)
    g = _stored_graph(ws)
    write_embeddings_csv(embed(g, cfg.walk, cfg.embedding), ws.embeddings)
    return StageResult(stage="embed", circuit=n.name, artifacts=[ws.embeddings])


def cmd_labels(cfg: PipelineConfig) -> StageResult:
    """Ground-truth FDR labels from a fault injection campaign."""
    n, ws = _stored_netlist(cfg)
    campaign = cfg.campaign
    if campaign.workload_file is not None:
        w = load_workload(campaign.workload_file, n, campaign.observed_outputs)
    else:
        w = generate_workload(
            n, campaign.n_cycles, campaign.workload_seed, campaign.observed_outputs
        )
    write_workload(w, ws.workload)

    if campaign.mode == "exhaustive":
        table = exhaustive_fdr(n, w)
    else:
        table = run_campaign(
            n, w, campaign.injections_per_ff, campaign.campaign_seed, campaign.workers
        )
    write_fdr_csv(table, ws.labels)
    return StageResult(stage="labels", circuit=n.name, artifacts=[ws.workload, ws.labels])


def cmd_train(cfg: PipelineConfig) -> StageResult:
    """Select training flip-flops and fit the GCN."""
    n, ws = _stored_netlist(cfg)
    g = _stored_graph(ws)
    x = read_embeddings_csv(ws.require(ws.embeddings, "embed"))
    labels = read_fdr_csv(ws.require(ws.labels, "labels"), "simulated")
    if x.cols != cfg.gcn.layer_dims[0]:
        raise FdrGcnConfigError(
            f"gcn.layer_dims[0] = {cfg.gcn.layer_dims[0]} but embeddings have {x.cols} columns"
        )

    training = select_training_set(labels, g, cfg.labels)
    check_training_nodes(training, g)
    model, history = train(_operator(g), x, training, cfg.gcn)
    save_weights(ws.weights, model, cfg.gcn)
    write_loss_csv(history, ws.loss)
    write_training_csv(training, ws.training)
    return StageResult(
        stage="train", circuit=n.name, artifacts=[ws.training, ws.weights, ws.loss]
    )


def cmd_predict(cfg: PipelineConfig) -> StageResult:
    """Predicted FDR of every flip-flop."""
    n, ws = _stored_netlist(cfg)
    g = _stored_graph(ws)
    x = read_embeddings_csv(ws.require(ws.embeddings, "embed"))
    model = load_weights(ws.require(ws.weights, "train"))
    targets = g.flipflop_nodes()
    table = predict(_operator(g), x, model, list(targets.values()), list(targets))
    write_fdr_csv(table, ws.predictions)
    return StageResult(stage="predict", circuit=n.name, artifacts=[ws.predictions])


def cmd_report(cfg: PipelineConfig) -> StageResult:
    """Compare predictions against the simulated labels."""
    n, ws = _stored_netlist(cfg)
    predicted = read_fdr_csv(ws.require(ws.predictions, "predict"), "predicted")
    simulated = read_fdr_csv(ws.require(ws.labels, "labels"), "simulated")
    training = read_training_csv(ws.require(ws.training, "train"))
    check_training_nodes(training, _stored_graph(ws))
    trained = dict(zip(training.names, (float(v) for v in training.labels)))
    exclude = list(training.names) if cfg.report.exclude_training else []

    report = compare_report(
        predicted, simulated, bins=cfg.report.bins, training=trained, exclude=exclude
    )
    write_report(report, ws.report)
    artifacts = [ws.report]
    if cfg.report.filter_outliers:
        filtered = compare_report(
            predicted,
            simulated,
            drop_outliers=True,
            bins=cfg.report.bins,
            training=trained,
            exclude=exclude,
        )
        write_report(filtered, ws.report_filtered)
        artifacts.append(ws.report_filtered)
    if cfg.report.plot_files:
        write_plot_files(report, ws.root)
        artifacts.extend(ws.plot_file(name) for name in PLOT_FILES)
    return StageResult(stage="report", circuit=n.name, artifacts=artifacts)


STAGES: Dict[str, Callable[[PipelineConfig], StageResult]] = {
    "graph": cmd_graph,
    "embed": cmd_embed,
    "labels": cmd_labels,
    "train": cmd_train,
    "predict": cmd_predict,
    "report": cmd_report,
}


def cmd_pipeline(cfg: PipelineConfig) -> List[StageResult]:
    """Run every stage in order."""
    results: List[StageResult] = []
    for name, stage in STAGES.items():
        logger.info(f"Running stage '{name}'", extra={"stage": name})
        results.append(stage(cfg))
    return results
