import pytest

from conftest import FIXTURE_ROWS, make_fixture_sis

from huretex.clustering import ClusterAssignment, Dendrogram, LayerClustering, TraceClustering
from huretex.sis import (SisError, build_sis, export_sis_csv, load_sis,
                         tuple_symbol, write_sis)
from huretex.trace import (ActivationTrace, LayerSpec, SampleRecord, TraceManifest,
                           output_layer)


def tiny_trace(n, labels, layers):
    """Activations are placeholders; SIS construction only reads ids/labels."""
    manifest = TraceManifest(layers=tuple(layers), num_samples=n)
    records = []
    for i in range(n):
        acts = {}
        for ls in manifest.hidden_layers:
            if ls.kind == "conv":
                acts[ls.name] = tuple((0.0,) * ls.unit_dim for _ in range(ls.units))
            else:
                acts[ls.name] = (0.0,) * ls.units
        records.append(SampleRecord(id=f"u{i + 1}", label=labels[i], activations=acts))
    return ActivationTrace(manifest=manifest, samples=tuple(records))


def assignment(labels):
    """Canonical-by-construction helper for hand-made fixtures."""
    k = max(labels) + 1
    sizes = tuple(labels.count(c) for c in range(k))
    return ClusterAssignment(k=k, assignment=tuple(labels), sizes=sizes)


def unit(labels):
    n = len(labels)
    return (Dendrogram(n_leaves=n, merges=tuple()), assignment(labels))


def test_fixture_table_built_from_clusterings():
    # dense columns matching the 8-object worked example: x1->0, x2->1 etc.
    a1 = [0, 0, 0, 1, 1, 1, 0, 1]
    a2 = [0, 0, 1, 0, 1, 1, 0, 1]
    labels = [r[3] for r in FIXTURE_ROWS]
    layers = [LayerSpec("a1", "dense", 2), LayerSpec("a2", "dense", 2),
              output_layer("d", ["0", "1"])]
    trace = tiny_trace(8, labels, layers)
    clustering = TraceClustering(
        sample_ids=tuple(f"u{i + 1}" for i in range(8)),
        layers={"a1": LayerClustering("a1", (unit(a1),)),
                "a2": LayerClustering("a2", (unit(a2),))})
    sis = build_sis(trace, clustering)
    assert sis.attributes == (("a1", "dense"), ("a2", "dense"), ("d", "output"))
    expected = [("0", "0", "0"), ("0", "0", "0"), ("0", "1", "1"), ("1", "0", "0"),
                ("1", "1", "1"), ("1", "1", "1"), ("0", "0", "1"), ("1", "1", "0")]
    got = [tuple(sis.value(r, a) for a in range(3)) for r in range(8)]
    assert got == expected
    # same row/column structure as the symbolic fixture
    fixture = make_fixture_sis()
    assert sis.rows == fixture.rows


def test_conv_tuple_symbol_and_interning():
    # symbol definition: per-filter cluster ids (3, 0) intern as "(3,0)"
    assert tuple_symbol((3, 0)) == "(3,0)"
    labels = ["a", "a", "b"]
    layers = [LayerSpec("c1", "conv", units=2, unit_dim=1), output_layer("out", ["a", "b"])]
    trace = tiny_trace(3, labels, layers)
    clustering = TraceClustering(
        sample_ids=("u1", "u2", "u3"),
        layers={"c1": LayerClustering("c1", (unit([1, 1, 0]), unit([0, 0, 1])))})
    sis = build_sis(trace, clustering)
    assert sis.value(0, 0) == "(1,0)"
    assert sis.value(1, 0) == "(1,0)"          # identical ids -> same symbol
    assert sis.value(2, 0) == "(0,1)"
    assert sis.alphabets[0] == ("(1,0)", "(0,1)")   # first-occurrence order


def test_min_support_replaces_rare_values_with_other():
    labels = ["a"] * 5 + ["b"]
    layers = [LayerSpec("d1", "dense", 1), output_layer("out", ["a", "b"])]
    trace = tiny_trace(6, labels, layers)
    clustering = TraceClustering(
        sample_ids=tuple(f"u{i + 1}" for i in range(6)),
        layers={"d1": LayerClustering("d1", (unit([0, 0, 0, 0, 1, 2]),))})
    sis = build_sis(trace, clustering, min_support=2)
    col = [sis.value(r, 0) for r in range(6)]
    assert col == ["0", "0", "0", "0", "OTHER", "OTHER"]
    # output attribute is never substituted
    assert [sis.value(r, 1) for r in range(6)] == labels


def test_missing_layer_and_id_mismatch_errors():
    labels = ["a", "a"]
    layers = [LayerSpec("d1", "dense", 1), output_layer("out", ["a"])]
    trace = tiny_trace(2, labels, layers)
    with pytest.raises(SisError, match="missing clustering"):
        build_sis(trace, TraceClustering(sample_ids=("u1", "u2"), layers={}))
    wrong_ids = TraceClustering(sample_ids=("w1", "w2"),
                                layers={"d1": LayerClustering("d1", (unit([0, 1]),))})
    with pytest.raises(SisError, match="sample ids"):
        build_sis(trace, wrong_ids)


def test_output_column_equals_labels(fixture_sis):
    for r in range(fixture_sis.n_objects):
        assert fixture_sis.value(r, 2) == fixture_sis.labels[r]


def test_csv_export_shape_and_tuples(tmp_path, fixture_sis):
    path = tmp_path / "sis.csv"
    export_sis_csv(fixture_sis, str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == 9
    assert lines[0] == "object,a1,a2,d"
    assert lines[1] == "u1,x1,y1,0"

    labels = ["a", "b"]
    layers = [LayerSpec("c1", "conv", units=2, unit_dim=1), output_layer("out", ["a", "b"])]
    trace = tiny_trace(2, labels, layers)
    clustering = TraceClustering(
        sample_ids=("u1", "u2"),
        layers={"c1": LayerClustering("c1", (unit([1, 0]), unit([0, 1])))})
    sis = build_sis(trace, clustering)
    tuple_path = tmp_path / "conv.csv"
    export_sis_csv(sis, str(tuple_path))
    rows = tuple_path.read_text().splitlines()
    # pipes instead of commas keep tuple cells free of CSV quoting
    assert rows[1] == "u1,(1|0),a"


def test_csv_export_io_error(fixture_sis, tmp_path):
    with pytest.raises(OSError):
        export_sis_csv(fixture_sis, str(tmp_path / "no" / "such" / "dir.csv"))


def test_ndjson_round_trip(tmp_path, fixture_sis):
    p1, p2 = str(tmp_path / "s1.ndjson"), str(tmp_path / "s2.ndjson")
    write_sis(fixture_sis, p1)
    reloaded = load_sis(p1)
    assert reloaded == fixture_sis
    write_sis(reloaded, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_rebuild_is_deterministic():
    a1 = [0, 0, 0, 1, 1, 1, 0, 1]
    labels = [r[3] for r in FIXTURE_ROWS]
    layers = [LayerSpec("a1", "dense", 2), output_layer("d", ["0", "1"])]
    trace = tiny_trace(8, labels, layers)
    clustering = TraceClustering(sample_ids=tuple(f"u{i + 1}" for i in range(8)),
                                 layers={"a1": LayerClustering("a1", (unit(a1),))})
    assert build_sis(trace, clustering) == build_sis(trace, clustering)
