import json
import subprocess
import sys

from conftest import make_fixture_sis

from huretex.cli import main
from huretex.rsfg import build_rsfg, write_graph


def run_cli(*argv):
    return main([str(a) for a in argv])


def synth(tmp_path, name="trace.ndjson", samples=120, seed=3, groups=3):
    path = tmp_path / name
    code = run_cli("synth", "--seed", seed, "--samples", samples, "--groups", groups,
                   "--layer", "conv:c1:2:4", "--layer", "dense:d1:6",
                   "--classes", "0,1,2", "--out", path)
    assert code == 0
    return path


def write_config(tmp_path, trace, workdir="out", **extra):
    cfg = {
        "trace": str(trace),
        "workdir": workdir,
        "seed": 7,
        "clustering": {"k": 3},
        "mining": {"generations": 30, "top_k": 3},
        "outputs": {"highlight": 1},
    }
    cfg.update(extra)
    path = tmp_path / f"{workdir}.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


ARTIFACTS = ["clusters.ndjson", "sis.ndjson", "graph.ndjson",
             "report.json", "twin.dot", "histograms.csv"]


def read_artifacts(workdir):
    return {name: (workdir / name).read_bytes() for name in ARTIFACTS}


def test_run_pipeline_end_to_end(tmp_path, capsys):
    trace = synth(tmp_path)
    cfg = write_config(tmp_path, trace)
    assert run_cli("run", "--config", cfg) == 0
    workdir = tmp_path / "out"
    for name in ARTIFACTS:
        assert (workdir / name).exists(), name
    report = json.loads((workdir / "report.json").read_text())
    assert report["graph_summary"]["n_objects"] == 120


def test_run_is_deterministic_across_reruns_and_threads(tmp_path):
    trace = synth(tmp_path)
    cfg = write_config(tmp_path, trace)
    runs = []
    for threads in (1, 1, 4):
        assert run_cli("run", "--config", cfg, "--threads", threads) == 0
        runs.append(read_artifacts(tmp_path / "out"))
    assert runs[0] == runs[1] == runs[2]


def test_config_naming_unknown_layer_fails_with_name(tmp_path, capsys):
    trace = synth(tmp_path)
    cfg = write_config(tmp_path, trace,
                       clustering={"k": 3, "layers": {"ghost": {"k": 2}}})
    code = run_cli("run", "--config", cfg)
    captured = capsys.readouterr()
    assert code == 3
    assert "huretex: validate:" in captured.err and "'ghost'" in captured.err


def test_stage_chain_and_missing_checkpoint(tmp_path, capsys):
    trace = synth(tmp_path)
    clusters = tmp_path / "clusters.ndjson"
    sis_path = tmp_path / "sis.ndjson"
    graph_path = tmp_path / "graph.ndjson"

    code = run_cli("graph", "--in", sis_path, "--out", graph_path)
    captured = capsys.readouterr()
    assert code == 3 and "run sis first" in captured.err

    assert run_cli("cluster", "--in", trace, "--out", clusters, "--k", "3") == 0
    assert run_cli("sis", "--trace", trace, "--clusters", clusters,
                   "--out", sis_path, "--csv", tmp_path / "sis.csv") == 0
    assert (tmp_path / "sis.csv").read_text().splitlines()[0] == "object,c1,d1,out"
    assert run_cli("graph", "--in", sis_path, "--out", graph_path) == 0
    assert run_cli("mine", "--in", graph_path, "--out", tmp_path / "m.json",
                   "--generations", "20") == 0
    assert run_cli("report", "--graph", graph_path, "--mining", tmp_path / "m.json",
                   "--dot", tmp_path / "t.dot", "--csv", tmp_path / "h.csv") == 0
    assert (tmp_path / "t.dot").exists() and (tmp_path / "h.csv").exists()


def test_mine_min_aggregator_on_fixture_graph(tmp_path):
    graph_path = tmp_path / "fixture-graph.ndjson"
    write_graph(build_rsfg(make_fixture_sis()), str(graph_path))
    out = tmp_path / "m.json"
    assert run_cli("mine", "--in", graph_path, "--out", out,
                   "--aggregator", "tnorm_min", "--seed", "1") == 0
    report = json.loads(out.read_text())
    assert report["paths"][0]["aggregate"] == 0.75


def test_synth_determinism(tmp_path):
    p1 = synth(tmp_path, "t1.ndjson", seed=5)
    p2 = synth(tmp_path, "t2.ndjson", seed=5)
    assert p1.read_bytes() == p2.read_bytes()


def test_validate_reports_bad_trace(tmp_path, capsys):
    bad = tmp_path / "bad.ndjson"
    bad.write_text('{"format":"huretex-trace","version":1,"layers":[],"num_samples":0}\n')
    code = run_cli("validate", "--in", bad)
    captured = capsys.readouterr()
    assert code == 3
    assert captured.err.startswith("huretex: validate:")
    assert "\n" not in captured.err.strip("\n")      # single-line error contract


def test_usage_error_exit_code(capsys):
    assert run_cli("cluster", "--in", "x") == 2      # --out missing
    captured = capsys.readouterr()
    assert captured.err.startswith("huretex: usage:")


def test_conservation_violation_aborts(tmp_path, capsys):
    # a freshly built graph always conserves, so drive the abort path with an
    # unsatisfiable tolerance; the checkpoint must still be retained
    trace = synth(tmp_path)
    clusters = tmp_path / "c.ndjson"
    sis_path = tmp_path / "s.ndjson"
    graph_path = tmp_path / "g.ndjson"
    run_cli("cluster", "--in", trace, "--out", clusters, "--k", "3")
    run_cli("sis", "--trace", trace, "--clusters", clusters, "--out", sis_path)
    capsys.readouterr()
    code = run_cli("graph", "--in", sis_path, "--out", graph_path,
                   "--tolerance", "-1.0")
    captured = capsys.readouterr()
    assert code == 4
    assert "conservation violated" in captured.err
    assert graph_path.exists()


def test_version_flag():
    result = subprocess.run([sys.executable, "-m", "huretex.cli", "--version"],
                            capture_output=True, text=True)
    assert result.returncode == 0
    assert result.stdout.strip().startswith("huretex ")
