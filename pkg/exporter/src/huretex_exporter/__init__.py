"""MNIST activation exporter: the model-side producer of huretex traces."""

__version__ = "0.1.0"

from .export import ExportError, ExportSpec, train_and_export

__all__ = ["ExportError", "ExportSpec", "train_and_export", "__version__"]
