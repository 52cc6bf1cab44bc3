"""huretex command line: the trace-to-report pipeline with NDJSON checkpoints.

Stages (each a subcommand, each writing a checkpoint the next one reads):

    validate -> cluster -> sis -> graph -> mine -> report

plus ``synth`` (test-fixture traces) and ``run`` (the whole pipeline from one
JSON config; pipeline output is a pure function of the trace and config
bytes).  Exit codes: 0 success, 2 usage, 3 validation, 4 stage failure; every
failure prints a single line ``huretex: <stage>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .errors import HuretexError
from .clustering import (ClusterParams, ClusteringError, cluster_trace_file,
                         load_clusters, write_clusters, LINKAGES)
from .pathmining import AGGREGATORS, EAConfig, ea_mine
from .report import export_dot, export_histograms_csv, export_report_json, load_report
from .rsfg import build_rsfg, load_graph, verify_conservation, write_graph
from .sis import build_sis_from_parts, export_sis_csv, load_sis, write_sis
from .trace import (LayerSpec, TraceError, generate_synthetic_trace, open_trace,
                    output_layer, write_trace)

log = logging.getLogger("huretex")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_STAGE = 4


class CliError(Exception):
    def __init__(self, stage: str, message: str, code: int = EXIT_STAGE):
        super().__init__(message)
        self.stage = stage
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


# ---------------------------------------------------------------------------
# pipeline config


@dataclass(frozen=True)
class PipelineConfig:
    trace: Path
    workdir: Path
    seed: int
    cluster_defaults: ClusterParams
    cluster_overrides: dict[str, ClusterParams]
    min_support: int
    sis_csv: Path | None
    aggregator: str
    ea: EAConfig
    out_dot: Path
    out_json: Path
    out_csv: Path
    highlight: int
    tolerance: float


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise CliError("config", f"unknown key {unknown[0]!r} in {where}",
                       EXIT_VALIDATION)


def _cluster_params(obj: dict, base: ClusterParams, where: str) -> ClusterParams:
    _check_keys(obj, {"k", "linkage", "subsample", "seed", "zscore"}, where)
    return replace(base, **obj)


def load_pipeline_config(path: str) -> PipelineConfig:
    cfg_path = Path(path)
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError("config", f"config file not found: {path}", EXIT_VALIDATION)
    except (OSError, ValueError) as exc:
        raise CliError("config", f"cannot read config {path}: {exc}", EXIT_VALIDATION)
    if not isinstance(raw, dict):
        raise CliError("config", "config must be a JSON object", EXIT_VALIDATION)
    _check_keys(raw, {"trace", "workdir", "seed", "clustering", "sis", "mining",
                      "outputs", "tolerance"}, "config")
    if "trace" not in raw:
        raise CliError("config", "config must name a trace file", EXIT_VALIDATION)
    base = cfg_path.resolve().parent

    def respath(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    seed = raw.get("seed", 0)
    workdir = respath(raw.get("workdir", "out"))

    cobj = dict(raw.get("clustering", {}))
    _check_keys(cobj, {"k", "linkage", "subsample", "seed", "zscore", "layers"},
                "clustering")
    layer_objs = cobj.pop("layers", {})
    if "seed" not in cobj:
        cobj["seed"] = seed
    try:
        defaults = _cluster_params(cobj, ClusterParams(), "clustering")
        overrides = {name: _cluster_params(o, defaults, f"clustering.layers.{name}")
                     for name, o in layer_objs.items()}
        defaults.validate()
        for p in overrides.values():
            p.validate()
    except (TypeError, ClusteringError) as exc:
        raise CliError("config", f"bad clustering settings: {exc}", EXIT_VALIDATION)

    sobj = raw.get("sis", {})
    _check_keys(sobj, {"min_support", "csv"}, "sis")
    min_support = sobj.get("min_support", 0)
    sis_csv = respath(sobj["csv"]) if sobj.get("csv") else None

    mobj = dict(raw.get("mining", {}))
    _check_keys(mobj, {"aggregator", "population", "generations", "crossover_prob",
                       "mutation_prob", "tournament_size", "elitism", "top_k",
                       "seed"}, "mining")
    aggregator = mobj.pop("aggregator", "tnorm_product")
    if aggregator not in AGGREGATORS:
        raise CliError("config", f"unknown aggregator {aggregator!r}", EXIT_VALIDATION)
    if "seed" not in mobj:
        mobj["seed"] = seed
    try:
        ea = EAConfig(**mobj)
        ea.validate()
    except (TypeError, HuretexError) as exc:
        raise CliError("config", f"bad mining settings: {exc}", EXIT_VALIDATION)

    oobj = raw.get("outputs", {})
    _check_keys(oobj, {"dot", "json", "csv", "highlight"}, "outputs")

    return PipelineConfig(
        trace=respath(raw["trace"]),
        workdir=workdir,
        seed=seed,
        cluster_defaults=defaults,
        cluster_overrides=overrides,
        min_support=min_support,
        sis_csv=sis_csv,
        aggregator=aggregator,
        ea=ea,
        out_dot=respath(oobj["dot"]) if "dot" in oobj else workdir / "twin.dot",
        out_json=respath(oobj["json"]) if "json" in oobj else workdir / "report.json",
        out_csv=respath(oobj["csv"]) if "csv" in oobj else workdir / "histograms.csv",
        highlight=oobj.get("highlight", 1),
        tolerance=raw.get("tolerance", 1e-9),
    )


def run_pipeline(cfg: PipelineConfig, threads: int = 1) -> None:
    """validate -> cluster -> sis -> graph (+conservation) -> mine -> report."""
    cfg.workdir.mkdir(parents=True, exist_ok=True)

    stage = "validate"
    try:
        manifest, records = open_trace(str(cfg.trace))
        ids, labels = [], []
        for rec in records:
            ids.append(rec.id)
            labels.append(rec.label)
        hidden = {ls.name for ls in manifest.hidden_layers}
        for name in cfg.cluster_overrides:
            if name not in hidden:
                raise CliError("validate", f"config names layer {name!r}, which is "
                               f"not a hidden layer of the trace", EXIT_VALIDATION)
        log.info("validate: %d samples, %d layers", len(ids), len(manifest.layers))

        stage = "cluster"
        clustering = cluster_trace_file(str(cfg.trace), cfg.cluster_defaults,
                                        cfg.cluster_overrides, threads=threads)
        write_clusters(clustering, str(cfg.workdir / "clusters.ndjson"))
        log.info("cluster: wrote %s", cfg.workdir / "clusters.ndjson")

        stage = "sis"
        sis = build_sis_from_parts(manifest, tuple(ids), tuple(labels),
                                   clustering, cfg.min_support)
        write_sis(sis, str(cfg.workdir / "sis.ndjson"))
        if cfg.sis_csv is not None:
            export_sis_csv(sis, str(cfg.sis_csv))
        log.info("sis: %d objects x %d attributes", sis.n_objects, sis.n_attributes)

        stage = "graph"
        graph = build_rsfg(sis)
        write_graph(graph, str(cfg.workdir / "graph.ndjson"))
        violations = verify_conservation(graph, cfg.tolerance)
        if violations:
            more = f" (+{len(violations) - 1} more)" if len(violations) > 1 else ""
            raise CliError("graph", f"conservation violated: {violations[0]}{more}",
                           EXIT_STAGE)
        log.info("graph: %d nodes, %d edges", graph.n_nodes, graph.n_edges)

        stage = "mine"
        result = ea_mine(graph, cfg.aggregator, cfg.ea)
        export_report_json(result, graph, str(cfg.out_json), cfg.aggregator)
        log.info("mine: %d evaluations, best %s vs oracle %s", result.evaluations,
                 result.paths[0].aggregate if result.paths else None,
                 result.oracle_optimum)

        stage = "report"
        marked = [p for p in result.paths[:cfg.highlight] if p.feasible]
        export_dot(graph, marked, str(cfg.out_dot))
        export_histograms_csv(graph, str(cfg.out_csv))
        log.info("report: wrote %s, %s", cfg.out_dot, cfg.out_csv)
    except CliError:
        raise
    except TraceError as exc:
        raise CliError(stage, str(exc), EXIT_VALIDATION) from exc
    except FileNotFoundError as exc:
        raise CliError(stage, f"file not found: {exc.filename}", EXIT_VALIDATION) from exc
    except HuretexError as exc:
        raise CliError(stage, str(exc), EXIT_STAGE) from exc


# ---------------------------------------------------------------------------
# subcommands


def _open_checkpoint(path: str, loader, stage: str, produced_by: str):
    try:
        return loader(path)
    except FileNotFoundError:
        raise CliError(stage, f"missing checkpoint {path!r}: run {produced_by} first",
                       EXIT_VALIDATION)
    except HuretexError as exc:
        raise CliError(stage, str(exc), EXIT_VALIDATION)


def cmd_synth(args) -> int:
    layers = []
    for text in args.layer:
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise CliError("synth", f"bad --layer {text!r}; expected "
                           f"kind:name:units[:unit_dim]", EXIT_USAGE)
        kind, name, units = parts[0], parts[1], parts[2]
        try:
            units_i = int(units)
            dim_i = int(parts[3]) if len(parts) == 4 else 1
        except ValueError:
            raise CliError("synth", f"bad --layer {text!r}: units and unit_dim "
                           f"must be integers", EXIT_USAGE)
        layers.append(LayerSpec(name=name, kind=kind, units=units_i, unit_dim=dim_i))
    classes = [c for c in args.classes.split(",") if c]
    layers.append(output_layer(args.output_name, classes))
    try:
        trace = generate_synthetic_trace(args.seed, layers, args.samples, args.groups)
        write_trace(trace, args.out)
    except TraceError as exc:
        raise CliError("synth", str(exc), EXIT_VALIDATION)
    print(f"wrote {args.out} ({args.samples} records)")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        manifest, records = open_trace(args.infile)
        n = sum(1 for _ in records)
    except FileNotFoundError:
        raise CliError("validate", f"file not found: {args.infile}", EXIT_VALIDATION)
    except TraceError as exc:
        raise CliError("validate", str(exc), EXIT_VALIDATION)
    print(f"trace OK: {n} samples, {len(manifest.classes)} classes, layers: "
          + ", ".join(f"{ls.name}({ls.kind})" for ls in manifest.layers))
    return EXIT_OK


def cmd_cluster(args) -> int:
    params = ClusterParams(k=args.k, linkage=args.linkage, subsample=args.subsample,
                           seed=args.seed, zscore=args.zscore)
    try:
        params.validate()
        clustering = cluster_trace_file(args.infile, params, {}, threads=args.threads)
    except FileNotFoundError:
        raise CliError("cluster", f"file not found: {args.infile}", EXIT_VALIDATION)
    except TraceError as exc:
        raise CliError("cluster", str(exc), EXIT_VALIDATION)
    except HuretexError as exc:
        raise CliError("cluster", str(exc), EXIT_STAGE)
    write_clusters(clustering, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sis(args) -> int:
    try:
        manifest, records = open_trace(args.trace)
        ids, labels = [], []
        for rec in records:
            ids.append(rec.id)
            labels.append(rec.label)
    except FileNotFoundError:
        raise CliError("sis", f"file not found: {args.trace}", EXIT_VALIDATION)
    except TraceError as exc:
        raise CliError("sis", str(exc), EXIT_VALIDATION)
    clustering = _open_checkpoint(args.clusters, load_clusters, "sis", "cluster")
    try:
        sis = build_sis_from_parts(manifest, tuple(ids), tuple(labels),
                                   clustering, args.min_support)
    except HuretexError as exc:
        raise CliError("sis", str(exc), EXIT_STAGE)
    write_sis(sis, args.out)
    if args.csv:
        export_sis_csv(sis, args.csv)
    print(f"wrote {args.out} ({sis.n_objects} objects x {sis.n_attributes} attributes)")
    return EXIT_OK


def cmd_graph(args) -> int:
    sis = _open_checkpoint(args.infile, load_sis, "graph", "sis")
    try:
        graph = build_rsfg(sis)
    except HuretexError as exc:
        raise CliError("graph", str(exc), EXIT_STAGE)
    write_graph(graph, args.out)
    violations = verify_conservation(graph, args.tolerance)
    if violations:
        more = f" (+{len(violations) - 1} more)" if len(violations) > 1 else ""
        raise CliError("graph", f"conservation violated: {violations[0]}{more}",
                       EXIT_STAGE)
    print(f"wrote {args.out} ({graph.n_nodes} nodes, {graph.n_edges} edges)")
    return EXIT_OK


def cmd_mine(args) -> int:
    graph = _open_checkpoint(args.infile, load_graph, "mine", "graph")
    config = EAConfig(population=args.population, generations=args.generations,
                      crossover_prob=args.crossover_prob,
                      mutation_prob=args.mutation_prob,
                      tournament_size=args.tournament_size, elitism=args.elitism,
                      top_k=args.top_k, seed=args.seed)
    try:
        config.validate()
        result = ea_mine(graph, args.aggregator, config)
        export_report_json(result, graph, args.out, args.aggregator)
    except HuretexError as exc:
        raise CliError("mine", str(exc), EXIT_STAGE)
    best = result.paths[0].aggregate if result.paths else None
    print(f"wrote {args.out} (evaluations={result.evaluations}, "
          f"best={best}, oracle={result.oracle_optimum})")
    return EXIT_OK


def cmd_report(args) -> int:
    graph = _open_checkpoint(args.graph, load_graph, "report", "graph")
    report = _open_checkpoint(args.mining, load_report, "report", "mine")
    try:
        marked = [entry.node_indices for entry in report.paths[:args.highlight]
                  if entry.feasible]
        export_dot(graph, marked, args.dot)
        export_histograms_csv(graph, args.csv)
    except HuretexError as exc:
        raise CliError("report", str(exc), EXIT_STAGE)
    print(f"wrote {args.dot}, {args.csv}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_pipeline_config(args.config)
    run_pipeline(cfg, threads=args.threads)
    print(f"pipeline complete: {cfg.out_dot}, {cfg.out_json}, {cfg.out_csv}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> _Parser:
    parser = _Parser(prog="huretex",
                     description="Build a readable twin of a trained sequential "
                                 "model from its activation trace.")
    parser.add_argument("--version", action="version",
                        version=f"huretex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic activation trace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--groups", type=int, default=1,
                   help="latent cluster groups per unit")
    p.add_argument("--layer", action="append", required=True,
                   metavar="KIND:NAME:UNITS[:UNIT_DIM]",
                   help="hidden layer spec; repeatable, order matters")
    p.add_argument("--classes", required=True, help="comma-separated class labels")
    p.add_argument("--output-name", default="out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="validate a trace file")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cluster", help="cluster per-unit artifacts")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--linkage", choices=LINKAGES, default="ward")
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zscore", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sis", help="assemble the sequential information system")
    p.add_argument("--trace", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None, help="also export the tabular CSV view")
    p.add_argument("--min-support", type=int, default=0)
    p.set_defaults(func=cmd_sis)

    p = sub.add_parser("graph", help="build the rough set flow graph")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("mine", help="mine confident prediction paths")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregator", choices=sorted(AGGREGATORS), default="tnorm_product")
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--crossover-prob", type=float, default=0.9)
    p.add_argument("--mutation-prob", type=float, default=None)
    p.add_argument("--tournament-size", type=int, default=2)
    p.add_argument("--elitism", type=int, default=1)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("report", help="export DOT and histogram CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--mining", required=True)
    p.add_argument("--dot", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--highlight", type=int, default=1,
                   help="highlight the top N feasible paths in the DOT output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the whole pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(name)s %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        message = str(exc).replace("\n", " ")
        print(f"huretex: {exc.stage}: {message}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:   # argparse --version/--help
        code = exc.code
        return int(code) if isinstance(code, int) else 0
    except OSError as exc:
        print(f"huretex: io: {exc}", file=sys.stderr)
        return EXIT_STAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
