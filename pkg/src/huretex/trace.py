"""Activation-trace interchange format.

A trace decouples the readable-twin core from whatever framework trained the
model.  It is UTF-8 NDJSON:

* line 1, manifest::

    {"format":"huretex-trace","version":1,
     "layers":[{"name":"c1","kind":"conv","units":2,"unit_dim":4},
               {"name":"d1","kind":"dense","units":8,"unit_dim":1},
               {"name":"out","kind":"output","classes":["0","1"]}],
     "num_samples":100}

* lines 2..n+1, one record per sample::

    {"id":"s000000","label":"0",
     "activations":{"c1":[[...4 floats...],[...]],"d1":[...8 floats...]}}

Layer kinds are ``conv`` (``units`` filters, each producing a flattened
feature map of length ``unit_dim``), ``dense`` (one vector of length
``units``, ``unit_dim`` fixed at 1) and ``output`` (class alphabet only,
exactly one, always last).  Untrained layers (input, flatten, pooling) are
unrepresentable by construction; exporters fold pooling into the preceding
conv layer's artifact.

Canonical form: keys in the order shown, no insignificant whitespace, floats
as shortest round-trip decimals, layers and activations in manifest order,
every line terminated by ``\\n``.  ``write_trace(load_trace(f))`` reproduces
a canonically formatted ``f`` byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

from .errors import HuretexError
from .rng import SplitMix64
from . import serialize

FORMAT_NAME = "huretex-trace"
FORMAT_VERSION = 1
LAYER_KINDS = ("conv", "dense", "output")

# Spacing between adjacent latent-group centroids in units of
# sigma * sqrt(unit_dim); within-group spread is ~sqrt(2*unit_dim) * sigma,
# so the separation/spread ratio is ~14, comfortably above 10.
GROUP_SEPARATION = 20.0


class TraceError(HuretexError, ValueError):
    """A trace file or trace value violates the format contract."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    units: int
    unit_dim: int = 1
    classes: tuple[str, ...] = ()

    def validate(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise TraceError(f"layer name must be a non-empty string, got {self.name!r}")
        if self.kind not in LAYER_KINDS:
            raise TraceError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "output":
            if not self.classes:
                raise TraceError(f"output layer {self.name!r} declares no classes")
            if len(set(self.classes)) != len(self.classes):
                raise TraceError(f"output layer {self.name!r} has duplicate classes")
            if any(not isinstance(c, str) or not c for c in self.classes):
                raise TraceError(f"output layer {self.name!r}: classes must be non-empty strings")
            if self.units != len(self.classes) or self.unit_dim != 1:
                raise TraceError(f"output layer {self.name!r}: units must equal the class count")
            return
        if self.classes:
            raise TraceError(f"layer {self.name!r}: only output layers carry classes")
        if not isinstance(self.units, int) or isinstance(self.units, bool) or self.units < 1:
            raise TraceError(f"layer {self.name!r}: units must be a positive integer")
        if not isinstance(self.unit_dim, int) or isinstance(self.unit_dim, bool) or self.unit_dim < 1:
            raise TraceError(f"layer {self.name!r}: unit_dim must be a positive integer")
        if self.kind == "dense" and self.unit_dim != 1:
            raise TraceError(f"dense layer {self.name!r}: unit_dim must be 1")


def output_layer(name: str, classes: Sequence[str]) -> LayerSpec:
    """Convenience constructor for the mandatory final layer."""
    return LayerSpec(name=name, kind="output", units=len(classes), unit_dim=1,
                     classes=tuple(classes))


@dataclass(frozen=True)
class TraceManifest:
    layers: tuple[LayerSpec, ...]
    num_samples: int

    def validate(self) -> None:
        if not self.layers:
            raise TraceError("manifest declares no layers")
        names = [ls.name for ls in self.layers]
        if len(set(names)) != len(names):
            raise TraceError("layer names must be unique")
        for ls in self.layers:
            ls.validate()
        outputs = [ls for ls in self.layers if ls.kind == "output"]
        if len(outputs) != 1:
            raise TraceError(f"exactly one output layer required, found {len(outputs)}")
        if self.layers[-1].kind != "output":
            raise TraceError("the output layer must be last")
        if not isinstance(self.num_samples, int) or isinstance(self.num_samples, bool) \
                or self.num_samples < 0:
            raise TraceError("num_samples must be a non-negative integer")

    @property
    def hidden_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers[:-1]

    @property
    def output(self) -> LayerSpec:
        return self.layers[-1]

    @property
    def classes(self) -> tuple[str, ...]:
        return self.layers[-1].classes

    def layer(self, name: str) -> LayerSpec:
        for ls in self.layers:
            if ls.name == name:
                return ls
        raise TraceError(f"no layer named {name!r} in the manifest")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    label: str
    # conv: tuple of `units` tuples, each `unit_dim` floats; dense: tuple of
    # `units` floats.  Keyed by layer name, output layer absent.
    activations: dict[str, tuple]


@dataclass(frozen=True)
class ActivationTrace:
    manifest: TraceManifest
    samples: tuple[SampleRecord, ...]

    @property
    def num_samples(self) -> int:
        return len(self.samples)


# ---------------------------------------------------------------------------
# serialization


def manifest_line(manifest: TraceManifest) -> str:
    layers = []
    for ls in manifest.layers:
        if ls.kind == "output":
            layers.append({"name": ls.name, "kind": ls.kind, "classes": list(ls.classes)})
        else:
            layers.append({"name": ls.name, "kind": ls.kind,
                           "units": ls.units, "unit_dim": ls.unit_dim})
    return serialize.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION,
                            "layers": layers, "num_samples": manifest.num_samples})


def record_line(record: SampleRecord, manifest: TraceManifest) -> str:
    acts: dict[str, object] = {}
    for ls in manifest.hidden_layers:
        value = record.activations[ls.name]
        if ls.kind == "conv":
            acts[ls.name] = [[float(x) for x in vec] for vec in value]
        else:
            acts[ls.name] = [float(x) for x in value]
    return serialize.dumps({"id": record.id, "label": record.label, "activations": acts})


def write_trace_stream(manifest: TraceManifest, records: Iterable[SampleRecord],
                       fh: IO[str]) -> int:
    """Write manifest + records; returns the record count (not re-validated
    against the manifest's declared ``num_samples``)."""
    fh.write(manifest_line(manifest) + "\n")
    n = 0
    for rec in records:
        fh.write(record_line(rec, manifest) + "\n")
        n += 1
    return n


def write_trace(trace: ActivationTrace, path: str) -> None:
    validate_trace(trace)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_trace_stream(trace.manifest, trace.samples, fh)


# ---------------------------------------------------------------------------
# validation + loading


def _check_number(x: object, where: str, line: int) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TraceError(f"{where}: activation values must be numbers, got {x!r}", line)
    x = float(x)
    if not math.isfinite(x):
        raise TraceError(f"{where}: non-finite activation value", line)
    return x


def _expect_keys(obj: dict, keys: tuple[str, ...], what: str, line: int) -> None:
    if not isinstance(obj, dict):
        raise TraceError(f"{what} must be a JSON object", line)
    if tuple(sorted(obj)) != tuple(sorted(keys)):
        raise TraceError(f"{what} must have exactly the keys {list(keys)}, "
                         f"got {sorted(obj)}", line)


def parse_manifest_line(text: str) -> TraceManifest:
    try:
        obj = serialize.loads(text)
    except ValueError as exc:
        raise TraceError(f"invalid manifest: {exc}", line=1) from exc
    _expect_keys(obj, ("format", "version", "layers", "num_samples"), "manifest", 1)
    if obj["format"] != FORMAT_NAME:
        raise TraceError(f"unknown format {obj['format']!r}", line=1)
    if obj["version"] != FORMAT_VERSION:
        raise TraceError(f"unsupported version {obj['version']!r}", line=1)
    if not isinstance(obj["layers"], list):
        raise TraceError("manifest layers must be a list", line=1)
    layers = []
    for entry in obj["layers"]:
        if not isinstance(entry, dict) or "kind" not in entry:
            raise TraceError(f"malformed layer entry {entry!r}", line=1)
        if entry.get("kind") == "output":
            _expect_keys(entry, ("name", "kind", "classes"), "output layer entry", 1)
            if not isinstance(entry["classes"], list):
                raise TraceError("output classes must be a list", line=1)
            layers.append(output_layer(entry["name"], entry["classes"]))
        else:
            _expect_keys(entry, ("name", "kind", "units", "unit_dim"), "layer entry", 1)
            layers.append(LayerSpec(name=entry["name"], kind=entry["kind"],
                                    units=entry["units"], unit_dim=entry["unit_dim"]))
    manifest = TraceManifest(layers=tuple(layers), num_samples=obj["num_samples"])
    try:
        manifest.validate()
    except TraceError as exc:
        raise TraceError(str(exc), line=1) from exc
    return manifest


def parse_record_line(text: str, manifest: TraceManifest, line: int) -> SampleRecord:
    try:
        obj = serialize.loads(text)
    except ValueError as exc:
        raise TraceError(f"malformed record: {exc}", line) from exc
    _expect_keys(obj, ("id", "label", "activations"), "record", line)
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise TraceError(f"record id must be a non-empty string, got {obj['id']!r}", line)
    sample_id = obj["id"]
    label = obj["label"]
    if label not in manifest.classes:
        raise TraceError(f"sample {sample_id!r}: unknown label {label!r}", line)
    acts_in = obj["activations"]
    if not isinstance(acts_in, dict):
        raise TraceError(f"sample {sample_id!r}: activations must be an object", line)
    expected = {ls.name for ls in manifest.hidden_layers}
    if set(acts_in) != expected:
        missing = sorted(expected - set(acts_in))
        extra = sorted(set(acts_in) - expected)
        raise TraceError(f"sample {sample_id!r}: activation layers mismatch "
                         f"(missing {missing}, unexpected {extra})", line)
    acts: dict[str, tuple] = {}
    for ls in manifest.hidden_layers:
        raw = acts_in[ls.name]
        where = f"sample {sample_id!r}, layer {ls.name!r}"
        if not isinstance(raw, list):
            raise TraceError(f"{where}: expected a list", line)
        if ls.kind == "conv":
            if len(raw) != ls.units:
                raise TraceError(f"{where}: expected {ls.units} unit vectors, "
                                 f"got {len(raw)}", line)
            vecs = []
            for vec in raw:
                if not isinstance(vec, list) or len(vec) != ls.unit_dim:
                    raise TraceError(f"{where}: each unit vector must have length "
                                     f"{ls.unit_dim}", line)
                vecs.append(tuple(_check_number(x, where, line) for x in vec))
            acts[ls.name] = tuple(vecs)
        else:
            if len(raw) != ls.units:
                raise TraceError(f"{where}: expected {ls.units} values, got {len(raw)}", line)
            acts[ls.name] = tuple(_check_number(x, where, line) for x in raw)
    return SampleRecord(id=sample_id, label=label, activations=acts)


def open_trace(path: str) -> tuple[TraceManifest, Iterator[SampleRecord]]:
    """Streaming reader: returns the manifest and a validating record iterator.

    The iterator holds one record at a time and raises on the first malformed
    line; the declared sample count is checked when it is exhausted.
    """
    fh = open(path, "r", encoding="utf-8")
    first = fh.readline()
    if not first.strip():
        fh.close()
        raise TraceError("missing manifest line", line=1)
    try:
        manifest = parse_manifest_line(first)
    except TraceError:
        fh.close()
        raise

    def records() -> Iterator[SampleRecord]:
        count = 0
        try:
            for line_no, text in enumerate(fh, start=2):
                stripped = text.strip()
                if not stripped:
                    raise TraceError("blank line", line_no)
                count += 1
                if count > manifest.num_samples:
                    raise TraceError(f"more records than the declared "
                                     f"num_samples={manifest.num_samples}", line_no)
                yield parse_record_line(stripped, manifest, line_no)
            if count != manifest.num_samples:
                raise TraceError(f"sample count mismatch: manifest declares "
                                 f"{manifest.num_samples}, file has {count}")
        finally:
            fh.close()

    return manifest, records()


def load_trace(path: str) -> ActivationTrace:
    """Load and fully validate a trace file."""
    manifest, records = open_trace(path)
    return ActivationTrace(manifest=manifest, samples=tuple(records))


def validate_trace(trace: ActivationTrace) -> None:
    """Validate an in-memory trace against its own manifest (round-trips the
    canonical record lines, so it enforces exactly the file-level contract)."""
    trace.manifest.validate()
    if len(trace.samples) != trace.manifest.num_samples:
        raise TraceError(f"sample count mismatch: manifest declares "
                         f"{trace.manifest.num_samples}, trace has {len(trace.samples)}")
    for i, rec in enumerate(trace.samples):
        parse_record_line(record_line(rec, trace.manifest), trace.manifest, i + 2)


# ---------------------------------------------------------------------------
# synthetic traces


def synthetic_group_ids(n_samples: int, n_latent_groups: int) -> list[int]:
    """Ground-truth latent group of each synthetic sample: ``i % n_latent_groups``."""
    return [i % n_latent_groups for i in range(n_samples)]


def generate_synthetic_trace(seed: int, spec: Sequence[LayerSpec], n_samples: int,
                             n_latent_groups: int = 1) -> ActivationTrace:
    """Deterministic trace with recoverable cluster structure.

    Sample ``i`` belongs to latent group ``i % n_latent_groups`` (see
    :func:`synthetic_group_ids`) and is labelled ``classes[group % n_classes]``.
    For every unit of every hidden layer, group centroids sit on a random line
    with spacing ``GROUP_SEPARATION * sqrt(unit_dim)`` and samples scatter
    around their centroid with unit-variance gaussian noise.

    RNG consumption order (single SplitMix64 stream seeded with ``seed``):
    first, per hidden layer and per unit, ``unit_dim`` gaussians for the
    centroid direction (re-drawn as a block while its norm is < 1e-9); then,
    per sample, per hidden layer, per unit, per dimension, one gaussian.
    """
    manifest = TraceManifest(layers=tuple(spec), num_samples=n_samples)
    manifest.validate()
    if not isinstance(n_samples, int) or n_samples < 1:
        raise TraceError(f"n_samples must be a positive integer, got {n_samples!r}")
    if not isinstance(n_latent_groups, int) or n_latent_groups < 1:
        raise TraceError(f"n_latent_groups must be a positive integer, got {n_latent_groups!r}")

    rng = SplitMix64(seed)
    centers: dict[tuple[str, int], list[list[float]]] = {}
    for ls in manifest.hidden_layers:
        dim = ls.unit_dim if ls.kind == "conv" else ls.units
        n_units = ls.units if ls.kind == "conv" else 1
        spacing = GROUP_SEPARATION * math.sqrt(dim)
        for u in range(n_units):
            while True:
                direction = [rng.gauss() for _ in range(dim)]
                norm = math.sqrt(sum(x * x for x in direction))
                if norm >= 1e-9:
                    break
            direction = [x / norm for x in direction]
            centers[(ls.name, u)] = [[g * spacing * x for x in direction]
                                     for g in range(n_latent_groups)]

    classes = manifest.classes
    groups = synthetic_group_ids(n_samples, n_latent_groups)
    records = []
    for i in range(n_samples):
        g = groups[i]
        acts: dict[str, tuple] = {}
        for ls in manifest.hidden_layers:
            if ls.kind == "conv":
                vecs = []
                for u in range(ls.units):
                    center = centers[(ls.name, u)][g]
                    vecs.append(tuple(c + rng.gauss() for c in center))
                acts[ls.name] = tuple(vecs)
            else:
                center = centers[(ls.name, 0)][g]
                acts[ls.name] = tuple(c + rng.gauss() for c in center)
        records.append(SampleRecord(id=f"s{i:06d}", label=classes[g % len(classes)],
                                    activations=acts))
    return ActivationTrace(manifest=manifest, samples=tuple(records))
