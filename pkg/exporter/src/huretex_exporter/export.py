"""Train a small convolutional MNIST classifier and export a huretex trace.

The exported artifacts are post-activation and post-pooling: each pooling
layer is folded into the preceding conv layer, so the trace only contains
trained layers (conv, dense, output) as the trace format requires.  The
80/20 split of the 60000 Keras training images yields the 48000-image
training set whose activations are exported.

This package deliberately talks to the huretex core only through its
external interfaces (the trace file format and the CLI); nothing here
imports the core.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO

import numpy as np

TRACE_FORMAT = "huretex-trace"
TRACE_VERSION = 1
CLASSES = tuple(str(d) for d in range(10))
TRAIN_FRACTION = 0.8   # 60000 -> 48000 train / 12000 validation


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportSpec:
    """Architecture + run controls.

    The default sizes (two conv blocks of 8 and 16 filters, a 64-unit dense
    layer, softmax over the 10 digits) are small enough for CPU training.
    ``cap`` limits how many of the training images are trained on and
    exported; ``None`` means the full 48000.
    """
    conv_filters: tuple[int, int] = (8, 16)
    kernel_size: int = 3
    pool_size: int = 2
    dense_units: int = 64
    epochs: int = 3
    seed: int = 0
    cap: int | None = None
    batch_size: int = 128

    def validate(self) -> None:
        if len(self.conv_filters) != 2 or any(f < 1 for f in self.conv_filters):
            raise ExportError(f"conv_filters must be two positive sizes, "
                              f"got {self.conv_filters!r}")
        for name in ("kernel_size", "pool_size", "dense_units", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ExportError(f"{name} must be positive")
        if self.cap is not None and self.cap < 1:
            raise ExportError("cap must be positive when given")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def build_model(spec: ExportSpec):
    """Functional model with taps on both post-pooling maps and the dense
    activation."""
    from tensorflow import keras
    from tensorflow.keras import layers

    inputs = keras.Input(shape=(28, 28, 1))
    x = layers.Conv2D(spec.conv_filters[0], spec.kernel_size, activation="relu",
                      name="conv1")(inputs)
    tap1 = layers.MaxPooling2D(spec.pool_size, name="conv1_pool")(x)
    x = layers.Conv2D(spec.conv_filters[1], spec.kernel_size, activation="relu",
                      name="conv2")(tap1)
    tap2 = layers.MaxPooling2D(spec.pool_size, name="conv2_pool")(x)
    x = layers.Flatten(name="flatten")(tap2)
    tap3 = layers.Dense(spec.dense_units, activation="relu", name="dense")(x)
    outputs = layers.Dense(len(CLASSES), activation="softmax", name="output")(tap3)
    model = keras.Model(inputs, outputs)
    extractor = keras.Model(inputs, [tap1, tap2, tap3])
    return model, extractor


def _load_mnist():
    from tensorflow import keras
    try:
        return keras.datasets.mnist.load_data()
    except Exception as exc:
        raise ExportError(f"MNIST download/cache failure: {exc}") from exc


def _manifest_line(spec: ExportSpec, shapes, num_samples: int) -> str:
    (h1, w1, f1), (h2, w2, f2), (dense,) = shapes
    layers = [
        {"name": "conv1", "kind": "conv", "units": int(f1), "unit_dim": int(h1 * w1)},
        {"name": "conv2", "kind": "conv", "units": int(f2), "unit_dim": int(h2 * w2)},
        {"name": "dense", "kind": "dense", "units": int(dense), "unit_dim": 1},
        {"name": "output", "kind": "output", "classes": list(CLASSES)},
    ]
    return _dumps({"format": TRACE_FORMAT, "version": TRACE_VERSION,
                   "layers": layers, "num_samples": num_samples})


def _record_line(index: int, label: int, conv1, conv2, dense) -> str:
    acts = {
        "conv1": [[float(v) for v in conv1[:, :, u].ravel()]
                  for u in range(conv1.shape[-1])],
        "conv2": [[float(v) for v in conv2[:, :, u].ravel()]
                  for u in range(conv2.shape[-1])],
        "dense": [float(v) for v in dense],
    }
    return _dumps({"id": f"s{index:06d}", "label": CLASSES[label],
                   "activations": acts})


def _export_records(extractor, x, y, fh: IO[str], batch_size: int) -> None:
    for start in range(0, len(x), batch_size):
        stop = min(start + batch_size, len(x))
        conv1, conv2, dense = extractor.predict(x[start:stop], verbose=0)
        for i in range(stop - start):
            fh.write(_record_line(start + i, int(y[start + i]),
                                  conv1[i], conv2[i], dense[i]) + "\n")


def train_and_export(spec: ExportSpec, out_path: str, dataset=None) -> dict:
    """Train, export the training set's activations and return metrics.

    ``dataset`` overrides the MNIST download with ``((x, y), (x_test, y_test))``
    of uint8 28x28 images (used by tests; production runs load real MNIST).
    """
    spec.validate()
    from tensorflow import keras

    keras.utils.set_random_seed(spec.seed)
    (x_all, y_all), (x_test, y_test) = dataset if dataset is not None else _load_mnist()
    x_all = x_all.astype(np.float32)[..., None] / 255.0
    x_test = x_test.astype(np.float32)[..., None] / 255.0

    split = int(len(x_all) * TRAIN_FRACTION)
    if split < 1 or split == len(x_all):
        raise ExportError(f"dataset too small to split: {len(x_all)} images")
    x_train, y_train = x_all[:split], y_all[:split]
    x_val, y_val = x_all[split:], y_all[split:]
    if spec.cap is not None:
        x_train, y_train = x_train[:spec.cap], y_train[:spec.cap]

    model, extractor = build_model(spec)
    model.compile(optimizer="adam", loss="sparse_categorical_crossentropy",
                  metrics=["accuracy"])
    model.fit(x_train, y_train, epochs=spec.epochs, batch_size=spec.batch_size,
              validation_data=(x_val, y_val), verbose=2)
    train_loss, train_acc = model.evaluate(x_train, y_train, verbose=0)
    test_loss, test_acc = model.evaluate(x_test, y_test, verbose=0)

    shapes = [tuple(int(d) for d in out.shape[1:]) for out in extractor.outputs]
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_manifest_line(spec, shapes, len(x_train)) + "\n")
        _export_records(extractor, x_train, y_train, fh, spec.batch_size)

    return {"samples": len(x_train), "train_accuracy": float(train_acc),
            "test_accuracy": float(test_acc), "train_loss": float(train_loss),
            "test_loss": float(test_loss)}
