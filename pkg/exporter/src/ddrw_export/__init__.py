"""Checkpoint-to-DDRW exporter with logit-parity verification."""

from .errors import (
    ConditionalModelError,
    EngineMissingError,
    ExporterError,
    MissingTensorError,
    UnsupportedArchitectureError,
)
from .export import export, verify

__all__ = [
    "ConditionalModelError",
    "EngineMissingError",
    "ExporterError",
    "MissingTensorError",
    "UnsupportedArchitectureError",
    "export",
    "verify",
]

__version__ = "0.1.0"
