import json
import re

import pytest

from huretex.pathmining import EAConfig, MiningResult, PredictionPath, ea_mine
from huretex.report import (ReportError, build_path_report, export_dot,
                            export_histograms_csv, export_report_json, load_report)
from huretex.rsfg import build_rsfg
from huretex.sis import SequentialInformationSystem


def identity_graph(classes=("a",)):
    n = len(classes) and 4
    sis = SequentialInformationSystem(
        attributes=(("a1", "dense"), ("d", "output")),
        alphabets=(("only",), tuple(classes)),
        rows=tuple((0, 0) for _ in range(n)),
        object_ids=tuple(f"u{i}" for i in range(n)),
        labels=(classes[0],) * n)
    return build_rsfg(sis)


# ---------------------------------------------------------------------------
# minimal DOT parser: statements, quoted strings, edges and attribute lists
# (pydot is unavailable here; this enforces the grammar subset we emit)

_STMT = re.compile(
    r"""^(?:
        digraph\s+\w+\s*\{ |
        \} |
        rankdir=LR; |
        node\s+\[shape=box\]; |
        \{\s*rank=same;(?:\s*"(?:[^"\\]|\\.)*";)+\s*\} |
        "(?:[^"\\]|\\.)*"\s+\[label="(?:[^"\\]|\\.)*"\]; |
        "(?:[^"\\]|\\.)*"\s+->\s+"(?:[^"\\]|\\.)*"\s+\[label="(?:[^"\\]|\\.)*"(?:\s+color=red\s+penwidth=2\.0)?\];
    )$""", re.VERBOSE)


def parse_dot(text):
    lines = text.strip().splitlines()
    assert lines[0].startswith("digraph") and lines[-1] == "}"
    nodes, edges, ranks = [], [], 0
    for line in lines:
        assert _STMT.match(line), f"unparseable DOT statement: {line!r}"
        if line.startswith("{ rank=same;"):
            ranks += 1
        elif "->" in line:
            edges.append(line)
        elif line.endswith("];") and "[label=" in line:
            nodes.append(line)
    return nodes, edges, ranks


def test_dot_fixture_counts(tmp_path, fixture_graph):
    path = tmp_path / "g.dot"
    export_dot(fixture_graph, None, str(path))
    nodes, edges, ranks = parse_dot(path.read_text(encoding="utf-8"))
    assert len(nodes) == 6 and len(edges) == 8 and ranks == 3


def test_dot_identity_graph_labels(tmp_path):
    path = tmp_path / "id.dot"
    export_dot(identity_graph(), None, str(path))
    text = path.read_text(encoding="utf-8")
    nodes, edges, ranks = parse_dot(text)
    assert len(nodes) == 2 and len(edges) == 1
    assert 'label="c=1.0000 v=1.0000 s=1.0000"' in edges[0]
    assert '"L0_only" [label="only\\nφ=4"];' in text


def test_dot_highlight_marks_path_edges(tmp_path, fixture_graph):
    path = tmp_path / "h.dot"
    export_dot(fixture_graph, [(0, 0, 0)], str(path))
    _, edges, _ = parse_dot(path.read_text(encoding="utf-8"))
    marked = [e for e in edges if "color=red penwidth=2.0" in e]
    assert len(marked) == 2
    assert any('"L0_x1" -> "L1_y1"' in e for e in marked)


def test_dot_highlight_infeasible_path_errors(tmp_path):
    g = identity_graph()
    # only one node per layer, so (0, 0) is the only sequence; fabricate a
    # graph with a hole instead
    sis = SequentialInformationSystem(
        attributes=(("a1", "dense"), ("d", "output")),
        alphabets=(("p", "q"), ("0", "1")),
        rows=((0, 0), (1, 1)),
        object_ids=("u1", "u2"), labels=("0", "1"))
    holey = build_rsfg(sis)
    with pytest.raises(ReportError, match="no edge from 'p' \\(layer 0\\) to '1'"):
        export_dot(holey, [(0, 1)], str(tmp_path / "x.dot"))


def test_dot_deterministic(tmp_path, fixture_graph):
    p1, p2 = tmp_path / "a.dot", tmp_path / "b.dot"
    export_dot(fixture_graph, [(0, 0, 0)], str(p1))
    export_dot(fixture_graph, [(0, 0, 0)], str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_dot_quoting_of_tuple_values(tmp_path):
    sis = SequentialInformationSystem(
        attributes=(("c1", "conv"), ("d", "output")),
        alphabets=(('(0,1)', '(1,0)'), ("a", "b")),
        rows=((0, 0), (1, 1)),
        object_ids=("u1", "u2"), labels=("a", "b"))
    path = tmp_path / "t.dot"
    export_dot(build_rsfg(sis), None, str(path))
    nodes, edges, _ = parse_dot(path.read_text(encoding="utf-8"))
    assert any('"L0_(0,1)"' in n for n in nodes)


# ---------------------------------------------------------------------------
# JSON report


def mining_result(graph, aggregator="tnorm_product", top_k=5, seed=42):
    return ea_mine(graph, aggregator, EAConfig(seed=seed, top_k=top_k,
                                               generations=20))


def test_report_json_fixture_values(tmp_path, fixture_graph):
    result = mining_result(fixture_graph)
    path = tmp_path / "r.json"
    export_report_json(result, fixture_graph, str(path), "tnorm_product")
    obj = json.loads(path.read_text(encoding="utf-8"))
    assert list(obj) == ["graph_summary", "aggregator", "paths"]
    assert obj["graph_summary"]["n_objects"] == 8
    assert obj["graph_summary"]["nodes"] == 6
    assert obj["aggregator"] == "tnorm_product"
    top = obj["paths"][0]
    assert top["aggregate"] == 0.5625
    assert top["values"] == ["x1", "y1", "0"]
    # per-node histograms ordered by the output alphabet
    y2_paths = [p for p in obj["paths"] if p["values"][1] == "y2"]
    assert y2_paths, "expected some path through y2 in the archive"
    assert y2_paths[0]["histograms"][1] == {"0": 1, "1": 3}


def test_report_top_k_one(tmp_path, fixture_graph):
    result = mining_result(fixture_graph, top_k=1)
    report = export_report_json(result, fixture_graph, str(tmp_path / "r.json"),
                                "tnorm_product")
    assert len(report.paths) == 1


def test_report_round_trip(tmp_path, fixture_graph):
    result = mining_result(fixture_graph)
    path = str(tmp_path / "r.json")
    report = export_report_json(result, fixture_graph, path, "tnorm_product")
    assert load_report(path) == report


def test_report_rejects_mismatched_result(fixture_graph, tmp_path):
    bogus = MiningResult(paths=(PredictionPath(nodes=(0, 0, 9),
                                               edge_confidences=(0.75, 0.75),
                                               aggregate=0.5625, feasible=True),),
                         evaluations=1)
    with pytest.raises(ReportError, match="unresolved"):
        export_report_json(bogus, fixture_graph, str(tmp_path / "x.json"),
                           "tnorm_product")


def test_report_histograms_match_graph(fixture_graph, tmp_path):
    result = mining_result(fixture_graph)
    report = build_path_report(result, fixture_graph, "tnorm_product")
    for entry in report.paths:
        for a, j in enumerate(entry.node_indices):
            assert entry.histograms[a] == fixture_graph.layers[a][j].class_histogram


# ---------------------------------------------------------------------------
# histogram CSV


def test_histogram_csv_fixture(tmp_path, fixture_graph):
    path = tmp_path / "h.csv"
    export_histograms_csv(fixture_graph, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "layer,node,class,count"
    assert len(lines) == 1 + 6 * 2          # 6 nodes x 2 classes
    assert "1,y2,0,1" in lines and "1,y2,1,3" in lines


def test_histogram_csv_includes_zero_rows(tmp_path):
    g = identity_graph(classes=("a", "b", "c"))
    path = tmp_path / "h.csv"
    export_histograms_csv(g, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    assert len(lines) == 2 * 3
    assert lines[0] == "0,only,a,4"
    assert lines[1] == "0,only,b,0"


def test_histogram_csv_column_sums(tmp_path, fixture_graph):
    path = tmp_path / "h.csv"
    export_histograms_csv(fixture_graph, str(path))
    totals = {}
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        _, _, cls, count = line.split(",")
        totals[cls] = totals.get(cls, 0) + int(count)
    # each class count appears once per layer
    assert totals == {"0": 4 * 3, "1": 4 * 3}
