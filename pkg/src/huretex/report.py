"""Readable-twin artifacts: DOT graph, JSON path report, CSV histograms.

These carry all data behind the usual visuals (layered graph drawing,
highlighted best paths, per-node class histograms); rendering itself is out
of scope.  All three exports are byte-deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

from .errors import HuretexError
from .pathmining import MiningResult, PredictionPath, confidence_tables
from .rsfg import FlowGraph
from . import serialize


class ReportError(HuretexError, ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON path report


@dataclass(frozen=True)
class EdgeDetail:
    certainty: float | None
    covering: float | None
    strength: float | None
    confidence: float | None


@dataclass(frozen=True)
class PathEntry:
    values: tuple[str, ...]              # node value per layer
    node_indices: tuple[int, ...]
    edges: tuple[EdgeDetail, ...]        # None fields where the edge is missing
    aggregate: float
    feasible: bool
    histograms: tuple[dict[str, int], ...]   # per node, classes in alphabet order


@dataclass(frozen=True)
class GraphSummary:
    n_objects: int
    layers: int
    nodes: int
    edges: int
    layer_names: tuple[str, ...]
    classes: tuple[str, ...]
    nodes_per_layer: tuple[int, ...]


@dataclass(frozen=True)
class PathReport:
    graph_summary: GraphSummary
    aggregator: str
    paths: tuple[PathEntry, ...]


def _check_nodes(nodes: Sequence[int], graph: FlowGraph, what: str) -> tuple[int, ...]:
    nodes = tuple(int(x) for x in nodes)
    if len(nodes) != graph.n_layers:
        raise ReportError(f"{what}: path has {len(nodes)} nodes, graph has "
                          f"{graph.n_layers} layers")
    for a, j in enumerate(nodes):
        if not 0 <= j < len(graph.layers[a]):
            raise ReportError(f"{what}: node index {j} unresolved in layer {a}")
    return nodes


def build_path_report(result: MiningResult, graph: FlowGraph,
                      aggregator: str) -> PathReport:
    edge_maps = [graph.edge_map(a) for a in range(max(graph.n_layers - 1, 0))]
    tables = confidence_tables(graph)
    entries = []
    for p in result.paths:
        nodes = _check_nodes(p.nodes, graph, "mining result")
        details = []
        for a in range(graph.n_layers - 1):
            e = edge_maps[a].get((nodes[a], nodes[a + 1]))
            if e is None:
                details.append(EdgeDetail(None, None, None, None))
            else:
                details.append(EdgeDetail(e.certainty, e.covering, e.strength,
                                          tables[a][nodes[a]][nodes[a + 1]]))
        entries.append(PathEntry(
            values=tuple(graph.layers[a][j].value for a, j in enumerate(nodes)),
            node_indices=nodes,
            edges=tuple(details),
            aggregate=p.aggregate,
            feasible=p.feasible,
            histograms=tuple(dict(graph.layers[a][j].class_histogram)
                             for a, j in enumerate(nodes))))
    summary = GraphSummary(
        n_objects=graph.n_objects, layers=graph.n_layers, nodes=graph.n_nodes,
        edges=graph.n_edges, layer_names=graph.attribute_names,
        classes=graph.classes, nodes_per_layer=graph.widths)
    return PathReport(graph_summary=summary, aggregator=aggregator, paths=tuple(entries))


def report_to_obj(report: PathReport) -> dict:
    s = report.graph_summary
    return {
        "graph_summary": {
            "n_objects": s.n_objects, "layers": s.layers, "nodes": s.nodes,
            "edges": s.edges, "layer_names": list(s.layer_names),
            "classes": list(s.classes), "nodes_per_layer": list(s.nodes_per_layer),
        },
        "aggregator": report.aggregator,
        "paths": [{
            "values": list(p.values),
            "node_indices": list(p.node_indices),
            "edges": [{"certainty": e.certainty, "covering": e.covering,
                       "strength": e.strength, "confidence": e.confidence}
                      for e in p.edges],
            "aggregate": p.aggregate,
            "feasible": p.feasible,
            "histograms": [{c: h[c] for c in s.classes} for h in p.histograms],
        } for p in report.paths],
    }


def report_from_obj(obj: dict) -> PathReport:
    try:
        s = obj["graph_summary"]
        summary = GraphSummary(
            n_objects=s["n_objects"], layers=s["layers"], nodes=s["nodes"],
            edges=s["edges"], layer_names=tuple(s["layer_names"]),
            classes=tuple(s["classes"]),
            nodes_per_layer=tuple(s["nodes_per_layer"]))
        paths = tuple(PathEntry(
            values=tuple(p["values"]),
            node_indices=tuple(p["node_indices"]),
            edges=tuple(EdgeDetail(e["certainty"], e["covering"], e["strength"],
                                   e["confidence"]) for e in p["edges"]),
            aggregate=p["aggregate"],
            feasible=p["feasible"],
            histograms=tuple(dict(h) for h in p["histograms"]),
        ) for p in obj["paths"])
    except (KeyError, TypeError) as exc:
        raise ReportError(f"malformed path report: {exc!r}") from exc
    return PathReport(graph_summary=summary, aggregator=obj["aggregator"], paths=paths)


def export_report_json(result: MiningResult, graph: FlowGraph, path: str,
                       aggregator: str) -> PathReport:
    """Serialize the mining result against its graph; canonical key order is
    graph_summary, aggregator, paths."""
    report = build_path_report(result, graph, aggregator)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize.dumps(report_to_obj(report)) + "\n")
    return report


def load_report(path: str) -> PathReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_obj(serialize.loads(fh.read()))


# ---------------------------------------------------------------------------
# DOT export


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _dot_quote(s: str) -> str:
    return '"' + _dot_escape(s) + '"'


def _node_id(layer: int, value: str) -> str:
    return f"L{layer}_{value}"


def export_dot(graph: FlowGraph, highlight=None, path: str = "twin.dot") -> None:
    """Left-to-right layered digraph.

    Node ids are ``L<i>_<value>``, node labels show the value and its
    through-flow, edge labels show certainty/covering/strength to 4 decimals.
    ``highlight`` is an optional list of paths (node-index sequences or
    :class:`PredictionPath`); their edges get a distinguishing colour.  Every
    highlighted edge must exist.
    """
    marked: set[tuple[int, int, int]] = set()
    for p in highlight or ():
        nodes = _check_nodes(p.nodes if isinstance(p, PredictionPath) else p,
                             graph, "highlight")
        for a in range(graph.n_layers - 1):
            if (nodes[a], nodes[a + 1]) not in graph.edge_map(a):
                raise ReportError(
                    f"cannot highlight an infeasible path: no edge from "
                    f"{graph.layers[a][nodes[a]].value!r} (layer {a}) to "
                    f"{graph.layers[a + 1][nodes[a + 1]].value!r} (layer {a + 1})")
            marked.add((a, nodes[a], nodes[a + 1]))

    lines = ["digraph huretex {", "rankdir=LR;", "node [shape=box];"]
    for layer in graph.layers:
        ids = " ".join(_dot_quote(_node_id(n.layer_index, n.value)) + ";"
                       for n in layer)
        lines.append("{ rank=same; " + ids + " }")
    for layer in graph.layers:
        for n in layer:
            # \n is the DOT line-break escape, so the value is escaped first
            label = '"' + _dot_escape(n.value) + "\\n" + f"φ={n.through_flow}" + '"'
            lines.append(f"{_dot_quote(_node_id(n.layer_index, n.value))} "
                         f"[label={label}];")
    for a, pair in enumerate(graph.edges):
        for e in pair:
            src = _node_id(a, graph.layers[a][e.from_index].value)
            dst = _node_id(a + 1, graph.layers[a + 1][e.to_index].value)
            label = f"c={e.certainty:.4f} v={e.covering:.4f} s={e.strength:.4f}"
            attrs = f"label={_dot_quote(label)}"
            if (a, e.from_index, e.to_index) in marked:
                attrs += " color=red penwidth=2.0"
            lines.append(f"{_dot_quote(src)} -> {_dot_quote(dst)} [{attrs}];")
    lines.append("}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# histogram CSV


def export_histograms_csv(graph: FlowGraph, path: str) -> None:
    """Rows ``layer,node,class,count`` ordered by layer, canonical node order,
    class alphabet order; zero counts included."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "node", "class", "count"])
        for a, layer in enumerate(graph.layers):
            for node in layer:
                for c in graph.classes:
                    writer.writerow([a, node.value, c, node.class_histogram[c]])
