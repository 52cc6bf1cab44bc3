"""Sequential information system: one object per training case, one ordered
symbolic attribute per retained layer.

Attribute values: conv layers intern the tuple of per-filter cluster ids as a
single opaque symbol ``"(c1,c2,...)"``, dense layers use the cluster id
itself, and the output attribute carries the class label.  Alphabets are
ordered by first occurrence over row order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import HuretexError
from .clustering import TraceClustering
from .trace import ActivationTrace
from . import serialize

OTHER_SYMBOL = "OTHER"
SIS_FORMAT = "huretex-sis"


class SisError(HuretexError, ValueError):
    pass


@dataclass(frozen=True)
class SequentialInformationSystem:
    attributes: tuple[tuple[str, str], ...]      # (name, kind), output last
    alphabets: tuple[tuple[str, ...], ...]       # per-attribute symbol order
    rows: tuple[tuple[int, ...], ...]            # per-object alphabet indexes
    object_ids: tuple[str, ...]
    labels: tuple[str, ...]

    @property
    def n_objects(self) -> int:
        return len(self.rows)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def value(self, row: int, attr: int) -> str:
        return self.alphabets[attr][self.rows[row][attr]]

    def validate(self) -> None:
        if not self.attributes:
            raise SisError("no attributes")
        if self.attributes[-1][1] != "output":
            raise SisError("the last attribute must be the output attribute")
        if any(kind == "output" for _, kind in self.attributes[:-1]):
            raise SisError("only the last attribute may be the output attribute")
        if len(self.alphabets) != len(self.attributes):
            raise SisError("one alphabet required per attribute")
        if not (len(self.rows) == len(self.object_ids) == len(self.labels)):
            raise SisError("rows, object_ids and labels must have equal length")
        for r, row in enumerate(self.rows):
            if len(row) != len(self.attributes):
                raise SisError(f"row {r} has {len(row)} values, "
                               f"expected {len(self.attributes)}")
            for a, v in enumerate(row):
                if not 0 <= v < len(self.alphabets[a]):
                    raise SisError(f"row {r}, attribute {a}: value index {v} "
                                   f"out of range")
            if self.alphabets[-1][row[-1]] != self.labels[r]:
                raise SisError(f"row {r}: output value does not equal the label")


def tuple_symbol(cluster_ids) -> str:
    """Interned symbol for a conv layer's per-filter cluster-id tuple."""
    return "(" + ",".join(str(int(c)) for c in cluster_ids) + ")"


def build_sis(trace: ActivationTrace, clusterings: TraceClustering,
              min_support: int = 0) -> SequentialInformationSystem:
    """Assemble the SIS from a trace and its per-layer clusterings.

    ``min_support``: non-output attribute values occurring in fewer than this
    many rows are replaced by the attribute-specific symbol ``OTHER`` (node
    explosion control for conv tuple alphabets).  The output attribute is
    never substituted, so its values always equal the trace labels.
    """
    return build_sis_from_parts(trace.manifest,
                                tuple(rec.id for rec in trace.samples),
                                tuple(rec.label for rec in trace.samples),
                                clusterings, min_support)


def build_sis_from_parts(manifest, sample_ids: tuple[str, ...],
                         labels_in: tuple[str, ...],
                         clusterings: TraceClustering,
                         min_support: int = 0) -> SequentialInformationSystem:
    """Streaming-friendly variant of :func:`build_sis`: activations are never
    touched, only the manifest, sample ids, labels and cluster assignments."""
    ids = tuple(sample_ids)
    if ids != tuple(clusterings.sample_ids):
        raise SisError("sample ids in the clustering do not match the trace")
    if not ids:
        raise SisError("cannot build a SIS from an empty trace")
    for spec in manifest.hidden_layers:
        if spec.name not in clusterings.layers:
            raise SisError(f"missing clustering for layer {spec.name!r}")

    n = len(ids)
    attributes = tuple((spec.name, spec.kind) for spec in manifest.layers)
    columns: list[list[str]] = []
    for spec in manifest.hidden_layers:
        lc = clusterings.layers[spec.name]
        expected_units = spec.units if spec.kind == "conv" else 1
        if len(lc.per_unit) != expected_units:
            raise SisError(f"layer {spec.name!r}: clustering has {len(lc.per_unit)} "
                           f"units, expected {expected_units}")
        for _, assign in lc.per_unit:
            if len(assign.assignment) != n:
                raise SisError(f"layer {spec.name!r}: assignment covers "
                               f"{len(assign.assignment)} samples, trace has {n}")
        if spec.kind == "conv":
            per_filter = [assign.assignment for _, assign in lc.per_unit]
            columns.append([tuple_symbol(row) for row in zip(*per_filter)])
        else:
            columns.append([str(c) for c in lc.per_unit[0][1].assignment])
    labels = tuple(labels_in)
    if len(labels) != n:
        raise SisError(f"{len(labels)} labels for {n} samples")
    for label in labels:
        if label not in manifest.classes:
            raise SisError(f"label {label!r} is not in the output alphabet")
    columns.append(list(labels))

    if min_support > 0:
        for col in columns[:-1]:
            counts: dict[str, int] = {}
            for v in col:
                counts[v] = counts.get(v, 0) + 1
            for i, v in enumerate(col):
                if counts[v] < min_support:
                    col[i] = OTHER_SYMBOL

    alphabets: list[tuple[str, ...]] = []
    rows_cols: list[list[int]] = []
    for col in columns:
        index: dict[str, int] = {}
        encoded = []
        for v in col:
            if v not in index:
                index[v] = len(index)
            encoded.append(index[v])
        alphabets.append(tuple(index))
        rows_cols.append(encoded)

    rows = tuple(zip(*rows_cols))
    sis = SequentialInformationSystem(attributes=attributes,
                                      alphabets=tuple(alphabets),
                                      rows=rows, object_ids=ids, labels=labels)
    sis.validate()
    return sis


def _csv_cell(symbol: str, kind: str) -> str:
    if kind == "conv" and symbol.startswith("("):
        return symbol.replace(",", "|")
    return symbol


def export_sis_csv(sis: SequentialInformationSystem, path: str) -> None:
    """Tabular export: header ``object,<attr...>``, tuple symbols rendered as
    ``(c1|c2|...)``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["object"] + [name for name, _ in sis.attributes])
        for r in range(sis.n_objects):
            writer.writerow([sis.object_ids[r]] +
                            [_csv_cell(sis.value(r, a), kind)
                             for a, (_, kind) in enumerate(sis.attributes)])


def write_sis(sis: SequentialInformationSystem, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize.dumps({
            "format": SIS_FORMAT, "version": 1,
            "attributes": [{"name": n, "kind": k} for n, k in sis.attributes],
            "alphabets": [list(a) for a in sis.alphabets],
            "num_rows": sis.n_objects,
        }) + "\n")
        for r in range(sis.n_objects):
            fh.write(serialize.dumps({"id": sis.object_ids[r],
                                      "values": list(sis.rows[r])}) + "\n")


def load_sis(path: str) -> SequentialInformationSystem:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            head = serialize.loads(fh.readline())
        except ValueError as exc:
            raise SisError(f"line 1: invalid SIS manifest: {exc}") from exc
        if not isinstance(head, dict) or head.get("format") != SIS_FORMAT:
            raise SisError("line 1: not a huretex-sis file")
        if head.get("version") != 1:
            raise SisError(f"line 1: unsupported version {head.get('version')!r}")
        attributes = tuple((e["name"], e["kind"]) for e in head["attributes"])
        alphabets = tuple(tuple(a) for a in head["alphabets"])
        rows = []
        ids = []
        for line_no, text in enumerate(fh, start=2):
            if not text.strip():
                raise SisError(f"line {line_no}: blank line")
            try:
                obj = serialize.loads(text)
            except ValueError as exc:
                raise SisError(f"line {line_no}: malformed row: {exc}") from exc
            ids.append(obj["id"])
            rows.append(tuple(int(v) for v in obj["values"]))
        if len(rows) != head["num_rows"]:
            raise SisError(f"row count mismatch: manifest declares "
                           f"{head['num_rows']}, file has {len(rows)}")
    labels = []
    for r, row in enumerate(rows):
        if not row or not 0 <= row[-1] < len(alphabets[-1]):
            raise SisError(f"row {r}: output value index out of range")
        labels.append(alphabets[-1][row[-1]])
    sis = SequentialInformationSystem(attributes=attributes, alphabets=alphabets,
                                      rows=tuple(rows), object_ids=tuple(ids),
                                      labels=tuple(labels))
    sis.validate()
    return sis
