"""Rough set flow graph: layered nodes, integer flow counts and the
certainty / covering / strength edge coefficients.

One node layer per SIS attribute; nodes are the realized attribute values in
alphabet order.  An edge exists iff at least one object takes both values in
consecutive attributes.  For an edge with flow ``f`` between nodes with
through-flows ``phi_from`` and ``phi_to`` in a system of ``N`` objects:

* certainty = f / phi_from   (share of the source's objects taking this edge)
* covering  = f / phi_to     (share of the target's objects arriving via it)
* strength  = f / N

which forces per-node certainty sums, per-node covering sums and per-pair
strength sums all to 1.  Exact integer flows are stored alongside the float
coefficients so downstream math can recompute without accumulation error.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import HuretexError
from .sis import SequentialInformationSystem
from . import serialize

GRAPH_FORMAT = "huretex-graph"


class GraphError(HuretexError, ValueError):
    pass


@dataclass(frozen=True)
class FlowNode:
    layer_index: int
    value: str
    through_flow: int
    class_histogram: dict[str, int]   # every class, in output-alphabet order


@dataclass(frozen=True)
class FlowEdge:
    layer_index: int                  # connects layer_index -> layer_index + 1
    from_index: int
    to_index: int
    flow: int
    certainty: float
    covering: float
    strength: float


@dataclass(frozen=True)
class FlowGraph:
    n_objects: int
    classes: tuple[str, ...]
    attribute_names: tuple[str, ...]
    layers: tuple[tuple[FlowNode, ...], ...]
    edges: tuple[tuple[FlowEdge, ...], ...]   # one tuple per consecutive layer pair

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(len(layer) for layer in self.layers)

    @property
    def n_nodes(self) -> int:
        return sum(self.widths)

    @property
    def n_edges(self) -> int:
        return sum(len(pair) for pair in self.edges)

    def edge_map(self, pair: int) -> dict[tuple[int, int], FlowEdge]:
        return {(e.from_index, e.to_index): e for e in self.edges[pair]}


@dataclass(frozen=True)
class Violation:
    kind: str          # "certainty" | "covering" | "strength"
    layer_index: int
    node_index: int | None
    residual: float

    def __str__(self) -> str:
        where = (f"layer {self.layer_index}" if self.node_index is None
                 else f"layer {self.layer_index}, node {self.node_index}")
        return f"{self.kind} sum off by {self.residual:+.3e} at {where}"


def build_rsfg(sis: SequentialInformationSystem) -> FlowGraph:
    """Counting pass over the SIS; a pure function of its input."""
    sis.validate()
    if sis.n_objects == 0:
        raise GraphError("cannot build a flow graph from an empty SIS")
    m = sis.n_attributes
    if m < 2:
        raise GraphError(f"a flow graph needs at least 2 attributes, got {m}")
    n = sis.n_objects
    classes = sis.alphabets[-1]

    layers: list[tuple[FlowNode, ...]] = []
    node_index_of: list[dict[int, int]] = []   # per layer: alphabet idx -> node idx
    for a in range(m):
        flows = [0] * len(sis.alphabets[a])
        hists = [dict.fromkeys(classes, 0) for _ in sis.alphabets[a]]
        for row, label in zip(sis.rows, sis.labels):
            flows[row[a]] += 1
            hists[row[a]][label] += 1
        nodes = []
        index_map: dict[int, int] = {}
        for v, symbol in enumerate(sis.alphabets[a]):
            if flows[v] == 0:
                continue   # valueless nodes are never materialized
            index_map[v] = len(nodes)
            nodes.append(FlowNode(layer_index=a, value=symbol,
                                  through_flow=flows[v],
                                  class_histogram=hists[v]))
        layers.append(tuple(nodes))
        node_index_of.append(index_map)

    all_edges: list[tuple[FlowEdge, ...]] = []
    for a in range(m - 1):
        counts: dict[tuple[int, int], int] = {}
        for row in sis.rows:
            key = (node_index_of[a][row[a]], node_index_of[a + 1][row[a + 1]])
            counts[key] = counts.get(key, 0) + 1
        pair_edges = []
        for (f_idx, t_idx) in sorted(counts):
            flow = counts[(f_idx, t_idx)]
            pair_edges.append(FlowEdge(
                layer_index=a, from_index=f_idx, to_index=t_idx, flow=flow,
                certainty=flow / layers[a][f_idx].through_flow,
                covering=flow / layers[a + 1][t_idx].through_flow,
                strength=flow / n))
        all_edges.append(tuple(pair_edges))

    return FlowGraph(n_objects=n, classes=classes,
                     attribute_names=tuple(name for name, _ in sis.attributes),
                     layers=tuple(layers), edges=tuple(all_edges))


def verify_conservation(graph: FlowGraph, tolerance: float = 1e-9) -> list[Violation]:
    """Report-only check of the three conservation laws.

    Empty result iff every non-terminal node's outgoing certainties, every
    non-initial node's incoming coverings and every layer pair's strengths
    sum to 1 within ``tolerance``.
    """
    violations: list[Violation] = []
    for a, pair in enumerate(graph.edges):
        out_sums = [0.0] * len(graph.layers[a])
        in_sums = [0.0] * len(graph.layers[a + 1])
        strength_sum = 0.0
        for e in pair:
            out_sums[e.from_index] += e.certainty
            in_sums[e.to_index] += e.covering
            strength_sum += e.strength
        for j, s in enumerate(out_sums):
            if abs(s - 1.0) > tolerance:
                violations.append(Violation("certainty", a, j, s - 1.0))
        for j, s in enumerate(in_sums):
            if abs(s - 1.0) > tolerance:
                violations.append(Violation("covering", a + 1, j, s - 1.0))
        if abs(strength_sum - 1.0) > tolerance:
            violations.append(Violation("strength", a, None, strength_sum - 1.0))
    return violations


# ---------------------------------------------------------------------------
# sidecar serialization


def write_graph(graph: FlowGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize.dumps({
            "format": GRAPH_FORMAT, "version": 1,
            "n_objects": graph.n_objects,
            "attributes": list(graph.attribute_names),
            "classes": list(graph.classes),
            "widths": list(graph.widths),
        }) + "\n")
        for layer in graph.layers:
            for node in layer:
                fh.write(serialize.dumps({
                    "type": "node", "layer": node.layer_index,
                    "value": node.value, "flow": node.through_flow,
                    "hist": [node.class_histogram[c] for c in graph.classes],
                }) + "\n")
        for pair in graph.edges:
            for e in pair:
                fh.write(serialize.dumps({
                    "type": "edge", "layer": e.layer_index,
                    "from": e.from_index, "to": e.to_index, "flow": e.flow,
                    "certainty": e.certainty, "covering": e.covering,
                    "strength": e.strength,
                }) + "\n")


def load_graph(path: str) -> FlowGraph:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            head = serialize.loads(fh.readline())
        except ValueError as exc:
            raise GraphError(f"line 1: invalid graph manifest: {exc}") from exc
        if not isinstance(head, dict) or head.get("format") != GRAPH_FORMAT:
            raise GraphError("line 1: not a huretex-graph file")
        if head.get("version") != 1:
            raise GraphError(f"line 1: unsupported version {head.get('version')!r}")
        classes = tuple(head["classes"])
        widths = [int(w) for w in head["widths"]]
        m = len(widths)
        nodes: list[list[FlowNode]] = [[] for _ in range(m)]
        edges: list[list[FlowEdge]] = [[] for _ in range(max(m - 1, 0))]
        for line_no, text in enumerate(fh, start=2):
            if not text.strip():
                raise GraphError(f"line {line_no}: blank line")
            try:
                obj = serialize.loads(text)
            except ValueError as exc:
                raise GraphError(f"line {line_no}: malformed entry: {exc}") from exc
            if obj.get("type") == "node":
                a = obj["layer"]
                if not 0 <= a < m:
                    raise GraphError(f"line {line_no}: layer {a} out of range")
                hist = obj["hist"]
                if len(hist) != len(classes):
                    raise GraphError(f"line {line_no}: histogram length mismatch")
                if obj["flow"] != sum(hist):
                    raise GraphError(f"line {line_no}: node flow disagrees with "
                                     f"its histogram")
                nodes[a].append(FlowNode(
                    layer_index=a, value=obj["value"], through_flow=obj["flow"],
                    class_histogram=dict(zip(classes, (int(h) for h in hist)))))
            elif obj.get("type") == "edge":
                a = obj["layer"]
                if not 0 <= a < m - 1:
                    raise GraphError(f"line {line_no}: edge layer {a} out of range")
                if obj["flow"] < 1:
                    raise GraphError(f"line {line_no}: zero-flow edge")
                edges[a].append(FlowEdge(
                    layer_index=a, from_index=obj["from"], to_index=obj["to"],
                    flow=obj["flow"], certainty=obj["certainty"],
                    covering=obj["covering"], strength=obj["strength"]))
            else:
                raise GraphError(f"line {line_no}: unknown entry type "
                                 f"{obj.get('type')!r}")
    for a, (width, layer_nodes) in enumerate(zip(widths, nodes)):
        if len(layer_nodes) != width:
            raise GraphError(f"layer {a}: expected {width} nodes, "
                             f"found {len(layer_nodes)}")
    for a, pair in enumerate(edges):
        for e in pair:
            if not (0 <= e.from_index < widths[a] and 0 <= e.to_index < widths[a + 1]):
                raise GraphError(f"edge {e.from_index}->{e.to_index} in pair {a} "
                                 f"references missing nodes")
    return FlowGraph(n_objects=head["n_objects"], classes=classes,
                     attribute_names=tuple(head["attributes"]),
                     layers=tuple(tuple(layer) for layer in nodes),
                     edges=tuple(tuple(pair) for pair in edges))
