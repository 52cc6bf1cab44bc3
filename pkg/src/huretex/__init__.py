"""Readable twins for sequential deep learning models.

Pipeline: activation trace -> per-unit agglomerative clustering -> sequential
information system -> rough set flow graph -> confident prediction paths ->
DOT / JSON / CSV reports.
"""

__version__ = "0.1.0"

from .errors import HuretexError
from .trace import (
    ActivationTrace,
    LayerSpec,
    SampleRecord,
    TraceError,
    TraceManifest,
    generate_synthetic_trace,
    load_trace,
    write_trace,
)
from .clustering import (
    ClusterAssignment,
    ClusteringError,
    Dendrogram,
    LayerClustering,
    TraceClustering,
    agglomerate,
    cluster_layer,
    cut,
)
from .sis import SequentialInformationSystem, SisError, build_sis, export_sis_csv
from .rsfg import FlowEdge, FlowGraph, FlowNode, GraphError, build_rsfg, verify_conservation
from .pathmining import (
    AGGREGATORS,
    Aggregator,
    EAConfig,
    MiningError,
    MiningResult,
    PredictionPath,
    best_path_exact,
    ea_mine,
    edge_confidence,
    enumerate_paths,
    path_aggregate,
)
from .report import PathReport, ReportError, export_dot, export_histograms_csv, export_report_json

__all__ = [
    "__version__",
    "HuretexError",
    "ActivationTrace", "LayerSpec", "SampleRecord", "TraceError", "TraceManifest",
    "generate_synthetic_trace", "load_trace", "write_trace",
    "ClusterAssignment", "ClusteringError", "Dendrogram", "LayerClustering",
    "TraceClustering", "agglomerate", "cluster_layer", "cut",
    "SequentialInformationSystem", "SisError", "build_sis", "export_sis_csv",
    "FlowEdge", "FlowGraph", "FlowNode", "GraphError", "build_rsfg", "verify_conservation",
    "AGGREGATORS", "Aggregator", "EAConfig", "MiningError", "MiningResult",
    "PredictionPath", "best_path_exact", "ea_mine", "edge_confidence",
    "enumerate_paths", "path_aggregate",
    "PathReport", "ReportError", "export_dot", "export_histograms_csv", "export_report_json",
]
