"""Agglomerative hierarchical clustering of per-unit activation artifacts.

Every unit of a hidden layer (a conv filter, or a dense layer as a whole) gets
its own full merge tree under Euclidean distance plus a flat cut at a fixed
``k``.  Ties are broken deterministically: merge the pair with the
lexicographically smallest ``(min label, max label)``, leaves labelled
``0..n-1`` and merge ``t`` labelled ``n+t``.

Two interchangeable merge-loop backends exist: a compiled Cython kernel and a
pure-NumPy fallback, selected at import time (``HURETEX_NO_EXT=1`` forces the
fallback).  They produce bit-identical results; ``benchmarks/`` compares their
speed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import HuretexError
from .rng import SplitMix64
from . import serialize
from .trace import ActivationTrace, LayerSpec, open_trace

LINKAGES = ("ward", "average", "complete", "single")

if os.environ.get("HURETEX_NO_EXT"):
    from . import _agglo_py as _backend
    COMPILED = False
else:
    try:
        from . import _agglo_cy as _backend  # type: ignore[no-redef]
        COMPILED = True
    except ImportError:
        from . import _agglo_py as _backend  # type: ignore[no-redef]
        COMPILED = False

BACKEND_NAME = "compiled" if COMPILED else "python"


class ClusteringError(HuretexError, ValueError):
    pass


@dataclass(frozen=True)
class Dendrogram:
    """Full merge tree: exactly ``n_leaves - 1`` merges with non-decreasing
    heights, each ``(left_label, right_label, height, merged_size)``."""
    n_leaves: int
    merges: tuple[tuple[int, int, float, int], ...]


@dataclass(frozen=True)
class ClusterAssignment:
    """Flat clusters with canonical ids: descending cluster size, ties broken
    by ascending smallest member index."""
    k: int
    assignment: tuple[int, ...]
    sizes: tuple[int, ...]


@dataclass(frozen=True)
class LayerClustering:
    layer: str
    per_unit: tuple[tuple[Dendrogram, ClusterAssignment], ...]


@dataclass(frozen=True)
class TraceClustering:
    """Clusterings for every hidden layer of one trace, in trace layer order."""
    sample_ids: tuple[str, ...]
    layers: dict[str, LayerClustering]


@dataclass(frozen=True)
class ClusterParams:
    """Per-layer clustering controls; ``subsample=None`` clusters everything."""
    k: int = 8
    linkage: str = "ward"
    subsample: int | None = None
    seed: int = 0
    zscore: bool = False

    def validate(self) -> None:
        if self.linkage not in LINKAGES:
            raise ClusteringError(f"unknown linkage {self.linkage!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ClusteringError(f"k must be a positive integer, got {self.k!r}")
        if self.subsample is not None and (not isinstance(self.subsample, int)
                                           or self.subsample < 1):
            raise ClusteringError(f"subsample must be a positive integer, "
                                  f"got {self.subsample!r}")


# ---------------------------------------------------------------------------
# core operations


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        X = vectors.astype(np.float64, copy=False)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ClusteringError("expected a non-empty 2-d array of vectors")
    else:
        rows = list(vectors)
        if not rows:
            raise ClusteringError("cannot cluster an empty vector list")
        dim = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != dim:
                raise ClusteringError(f"vector {i} has dimension {len(row)}, expected {dim}")
        X = np.asarray(rows, dtype=np.float64)
    if X.shape[1] == 0:
        raise ClusteringError("vectors must have at least one dimension")
    if not np.isfinite(X).all():
        raise ClusteringError("vectors contain non-finite values")
    return X


def _pairwise_matrix(X: np.ndarray, squared: bool) -> np.ndarray:
    """Dense symmetric distance matrix with +inf diagonal.

    Row-by-row so both backends consume identical bits and memory stays at
    one extra row of the input.
    """
    n = X.shape[0]
    D = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        diff = X - X[i]
        D[i] = (diff * diff).sum(axis=1)
    if not squared:
        np.sqrt(D, out=D)
    np.fill_diagonal(D, np.inf)
    return D


def _merge_tree(X: np.ndarray, linkage: str) -> Dendrogram:
    n = X.shape[0]
    if n == 1:
        return Dendrogram(n_leaves=1, merges=())
    D = _pairwise_matrix(X, squared=(linkage == "ward"))
    raw = _backend.linkage_merges(D, linkage)
    merges = []
    prev = 0.0
    for left, right, dist, size in raw:
        h = math.sqrt(dist if dist > 0.0 else 0.0) if linkage == "ward" else dist
        # Lance-Williams rounding can undercut by an ulp on degenerate ties;
        # heights are contractually non-decreasing.
        if h < prev:
            h = prev
        prev = h
        merges.append((left, right, h, size))
    return Dendrogram(n_leaves=n, merges=tuple(merges))


def agglomerate(vectors, linkage: str = "ward") -> Dendrogram:
    """Full merge tree of the given equal-length vectors under Euclidean
    distance and the chosen linkage (ward, average, complete or single)."""
    if linkage not in LINKAGES:
        raise ClusteringError(f"unknown linkage {linkage!r}")
    return _merge_tree(_as_matrix(vectors), linkage)


def _canonical_assignment(members: Iterable[Sequence[int]], n: int) -> ClusterAssignment:
    ordered = sorted((tuple(m) for m in members), key=lambda m: (-len(m), min(m)))
    assignment = [0] * n
    for cid, mem in enumerate(ordered):
        for i in mem:
            assignment[i] = cid
    return ClusterAssignment(k=len(ordered), assignment=tuple(assignment),
                             sizes=tuple(len(m) for m in ordered))


def _labels_to_members(labels: Sequence[int]) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return list(groups.values())


def cut(dendrogram: Dendrogram, k: int) -> ClusterAssignment:
    """Flat clusters obtained by undoing the last ``k - 1`` merges."""
    n = dendrogram.n_leaves
    if not isinstance(k, int) or not 1 <= k <= n:
        raise ClusteringError(f"k must be in 1..{n}, got {k!r}")
    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    for t, (left, right, _height, _size) in enumerate(dendrogram.merges[:n - k]):
        clusters[n + t] = clusters.pop(left) + clusters.pop(right)
    return _canonical_assignment(clusters.values(), n)


# ---------------------------------------------------------------------------
# per-layer clustering


@dataclass(frozen=True)
class _UnitModel:
    """Fitted state of one unit, enough to assign unseen artifacts."""
    dendrogram: Dendrogram
    fit_assignment: ClusterAssignment
    centroids: np.ndarray | None = None       # None when fitted on all samples
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return X
        return (X - self.mean) / self.scale

    def assign_rows(self, X: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels (ties to the lowest cluster id)."""
        Z = self.transform(X)
        k = self.centroids.shape[0]
        d2 = np.empty((Z.shape[0], k), dtype=np.float64)
        for c in range(k):
            diff = Z - self.centroids[c]
            d2[:, c] = (diff * diff).sum(axis=1)
        return np.argmin(d2, axis=1)


def _fit_unit(X: np.ndarray, params: ClusterParams, sub_idx: np.ndarray | None,
              want_centroids: bool | None = None) -> _UnitModel:
    if want_centroids is None:
        want_centroids = sub_idx is not None
    mean = scale = None
    if params.zscore:
        fit_rows = X if sub_idx is None else X[sub_idx]
        mean = fit_rows.mean(axis=0)
        scale = fit_rows.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        X = (X - mean) / scale
    fit = X if sub_idx is None else X[sub_idx]
    dend = _merge_tree(fit, params.linkage)
    assignment = cut(dend, params.k)
    if not want_centroids:
        return _UnitModel(dendrogram=dend, fit_assignment=assignment,
                          mean=mean, scale=scale)
    labels = np.asarray(assignment.assignment)
    centroids = np.stack([fit[labels == c].mean(axis=0) for c in range(assignment.k)])
    return _UnitModel(dendrogram=dend, fit_assignment=assignment,
                      centroids=centroids, mean=mean, scale=scale)


def _finish_unit(model: _UnitModel, X: np.ndarray,
                 sub_idx: np.ndarray | None) -> tuple[Dendrogram, ClusterAssignment]:
    if sub_idx is None:
        return model.dendrogram, model.fit_assignment
    full = model.assign_rows(np.asarray(X, dtype=np.float64))
    full[sub_idx] = model.fit_assignment.assignment
    return model.dendrogram, _canonical_assignment(_labels_to_members(full), len(full))


def _unit_series(trace: ActivationTrace, spec: LayerSpec) -> list[np.ndarray]:
    if spec.kind == "conv":
        return [np.asarray([rec.activations[spec.name][u] for rec in trace.samples],
                           dtype=np.float64)
                for u in range(spec.units)]
    return [np.asarray([rec.activations[spec.name] for rec in trace.samples],
                       dtype=np.float64)]


def _resolve_subsample(params: ClusterParams, n: int) -> np.ndarray | None:
    if params.subsample is None or params.subsample >= n:
        return None
    rng = SplitMix64(params.seed)
    return np.asarray(rng.sample_sorted(n, params.subsample), dtype=np.int64)


def cluster_layer(trace: ActivationTrace, layer: str, k: int,
                  linkage: str = "ward", *, subsample: int | None = None,
                  seed: int = 0, zscore: bool = False) -> LayerClustering:
    """Cluster one hidden layer of an in-memory trace.

    Conv layers get one dendrogram + assignment per filter, dense layers
    exactly one.  With ``subsample`` set, the tree is fitted on a seeded
    uniform subsample and the remaining artifacts are assigned to the nearest
    cluster centroid; cluster ids are then re-canonicalized over the full
    sample set.
    """
    spec = trace.manifest.layer(layer)
    if spec.kind == "output":
        raise ClusteringError(f"layer {layer!r} is the output layer; it has no artifacts")
    params = ClusterParams(k=k, linkage=linkage, subsample=subsample,
                           seed=seed, zscore=zscore)
    params.validate()
    n = trace.num_samples
    sub_idx = _resolve_subsample(params, n)
    fit_n = n if sub_idx is None else len(sub_idx)
    if k > fit_n:
        raise ClusteringError(f"k={k} exceeds the number of clustered artifacts ({fit_n})")
    per_unit = []
    for X in _unit_series(trace, spec):
        model = _fit_unit(X, params, sub_idx)
        per_unit.append(_finish_unit(model, X, sub_idx))
    return LayerClustering(layer=layer, per_unit=tuple(per_unit))


def cluster_trace(trace: ActivationTrace, defaults: ClusterParams,
                  overrides: dict[str, ClusterParams] | None = None) -> TraceClustering:
    """Cluster every hidden layer of an in-memory trace."""
    overrides = overrides or {}
    layers: dict[str, LayerClustering] = {}
    for spec in trace.manifest.hidden_layers:
        p = overrides.get(spec.name, defaults)
        layers[spec.name] = cluster_layer(trace, spec.name, p.k, p.linkage,
                                          subsample=p.subsample, seed=p.seed,
                                          zscore=p.zscore)
    return TraceClustering(sample_ids=tuple(r.id for r in trace.samples), layers=layers)


def cluster_trace_file(path: str, defaults: ClusterParams,
                       overrides: dict[str, ClusterParams] | None = None,
                       threads: int = 1) -> TraceClustering:
    """Streaming variant of :func:`cluster_trace`.

    Pass 1 collects, per unit, only the rows needed to fit (the subsample, or
    everything when a layer has no subsample).  Pass 2 re-reads the file and
    assigns out-of-sample artifacts to nearest centroids, so peak memory is
    the fitted rows plus one record.  Results are independent of ``threads``.
    """
    overrides = overrides or {}
    manifest, records = open_trace(path)
    plan: list[tuple[LayerSpec, ClusterParams, np.ndarray | None]] = []
    for spec in manifest.hidden_layers:
        p = overrides.get(spec.name, defaults)
        p.validate()
        sub_idx = _resolve_subsample(p, manifest.num_samples)
        fit_n = manifest.num_samples if sub_idx is None else len(sub_idx)
        if p.k > fit_n:
            raise ClusteringError(f"layer {spec.name!r}: k={p.k} exceeds the number "
                                  f"of clustered artifacts ({fit_n})")
        plan.append((spec, p, sub_idx))

    # pass 1: collect fit rows
    sample_ids: list[str] = []
    fit_rows: dict[tuple[str, int], list] = {(spec.name, u): []
                                             for spec, _, _ in plan
                                             for u in range(spec.units if spec.kind == "conv" else 1)}
    sub_sets = {spec.name: (None if sub is None else set(int(i) for i in sub))
                for spec, _, sub in plan}
    for i, rec in enumerate(records):
        sample_ids.append(rec.id)
        for spec, _, _ in plan:
            wanted = sub_sets[spec.name]
            if wanted is not None and i not in wanted:
                continue
            if spec.kind == "conv":
                for u in range(spec.units):
                    fit_rows[(spec.name, u)].append(rec.activations[spec.name][u])
            else:
                fit_rows[(spec.name, 0)].append(rec.activations[spec.name])

    jobs = [(spec, p, sub_idx, u)
            for spec, p, sub_idx in plan
            for u in range(spec.units if spec.kind == "conv" else 1)]

    def fit_job(job):
        spec, p, sub_idx, u = job
        X = np.asarray(fit_rows[(spec.name, u)], dtype=np.float64)
        # rows were collected pre-filtered, so fit on everything collected
        local = ClusterParams(k=p.k, linkage=p.linkage, subsample=None,
                              seed=p.seed, zscore=p.zscore)
        return _fit_unit(X, local, None, want_centroids=sub_idx is not None)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(pool.map(fit_job, jobs))
    else:
        models = [fit_job(job) for job in jobs]
    model_by_unit = {(job[0].name, job[3]): m for job, m in zip(jobs, models)}

    # pass 2: extend subsampled layers to the full sample set
    full_labels: dict[tuple[str, int], np.ndarray] = {}
    needs_pass2 = [spec for spec, _, sub in plan if sub is not None]
    if needs_pass2:
        n = manifest.num_samples
        for spec in needs_pass2:
            units = spec.units if spec.kind == "conv" else 1
            for u in range(units):
                full_labels[(spec.name, u)] = np.empty(n, dtype=np.int64)
        _, records2 = open_trace(path)
        for i, rec in enumerate(records2):
            for spec in needs_pass2:
                if spec.kind == "conv":
                    for u in range(spec.units):
                        row = np.asarray(rec.activations[spec.name][u],
                                         dtype=np.float64)[None, :]
                        full_labels[(spec.name, u)][i] = \
                            model_by_unit[(spec.name, u)].assign_rows(row)[0]
                else:
                    row = np.asarray(rec.activations[spec.name], dtype=np.float64)[None, :]
                    full_labels[(spec.name, 0)][i] = \
                        model_by_unit[(spec.name, 0)].assign_rows(row)[0]

    layers: dict[str, LayerClustering] = {}
    for spec, p, sub_idx in plan:
        units = spec.units if spec.kind == "conv" else 1
        per_unit = []
        for u in range(units):
            model = model_by_unit[(spec.name, u)]
            if sub_idx is None:
                per_unit.append((model.dendrogram, model.fit_assignment))
            else:
                labels = full_labels[(spec.name, u)]
                labels[sub_idx] = model.fit_assignment.assignment
                per_unit.append((model.dendrogram,
                                 _canonical_assignment(_labels_to_members(labels),
                                                       len(labels))))
        layers[spec.name] = LayerClustering(layer=spec.name, per_unit=tuple(per_unit))
    return TraceClustering(sample_ids=tuple(sample_ids), layers=layers)


# ---------------------------------------------------------------------------
# sidecar serialization

CLUSTERS_FORMAT = "huretex-clusters"


def write_clusters(clustering: TraceClustering, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        head = {"format": CLUSTERS_FORMAT, "version": 1,
                "num_samples": len(clustering.sample_ids),
                "sample_ids": list(clustering.sample_ids),
                "layers": list(clustering.layers)}
        fh.write(serialize.dumps(head) + "\n")
        for name, lc in clustering.layers.items():
            for u, (dend, assign) in enumerate(lc.per_unit):
                fh.write(serialize.dumps({
                    "layer": name, "unit": u, "k": assign.k,
                    "n_leaves": dend.n_leaves,
                    "merges": [[l, r, h, s] for l, r, h, s in dend.merges],
                    "assignment": list(assign.assignment),
                    "sizes": list(assign.sizes),
                }) + "\n")


def load_clusters(path: str) -> TraceClustering:
    with open(path, "r", encoding="utf-8") as fh:
        head_line = fh.readline()
        try:
            head = serialize.loads(head_line)
        except ValueError as exc:
            raise ClusteringError(f"line 1: invalid clusters manifest: {exc}") from exc
        if not isinstance(head, dict) or head.get("format") != CLUSTERS_FORMAT:
            raise ClusteringError("line 1: not a huretex-clusters file")
        if head.get("version") != 1:
            raise ClusteringError(f"line 1: unsupported version {head.get('version')!r}")
        ids = tuple(head["sample_ids"])
        n = head["num_samples"]
        if len(ids) != n:
            raise ClusteringError("line 1: sample_ids length disagrees with num_samples")
        units: dict[str, list[tuple[int, Dendrogram, ClusterAssignment]]] = \
            {name: [] for name in head["layers"]}
        for line_no, text in enumerate(fh, start=2):
            if not text.strip():
                raise ClusteringError(f"line {line_no}: blank line")
            try:
                obj = serialize.loads(text)
            except ValueError as exc:
                raise ClusteringError(f"line {line_no}: malformed entry: {exc}") from exc
            name = obj["layer"]
            if name not in units:
                raise ClusteringError(f"line {line_no}: unknown layer {name!r}")
            merges = tuple((int(l), int(r), float(h), int(s))
                           for l, r, h, s in obj["merges"])
            dend = Dendrogram(n_leaves=obj["n_leaves"], merges=merges)
            if len(merges) != dend.n_leaves - 1:
                raise ClusteringError(f"line {line_no}: dendrogram must have "
                                      f"n_leaves-1 merges")
            assignment = tuple(int(a) for a in obj["assignment"])
            if len(assignment) != n:
                raise ClusteringError(f"line {line_no}: assignment length "
                                      f"{len(assignment)} != num_samples {n}")
            sizes = tuple(int(s) for s in obj["sizes"])
            if len(sizes) != obj["k"] or sum(sizes) != n:
                raise ClusteringError(f"line {line_no}: sizes disagree with k or "
                                      f"num_samples")
            assign = ClusterAssignment(k=obj["k"], assignment=assignment, sizes=sizes)
            units[name].append((obj["unit"], dend, assign))
    layers = {}
    for name, entries in units.items():
        entries.sort(key=lambda e: e[0])
        if [u for u, _, _ in entries] != list(range(len(entries))):
            raise ClusteringError(f"layer {name!r}: unit indices must be 0..units-1")
        layers[name] = LayerClustering(layer=name,
                                       per_unit=tuple((d, a) for _, d, a in entries))
    return TraceClustering(sample_ids=ids, layers=layers)
