"""Exporter error hierarchy."""


class ExporterError(Exception):
    """Base class for all exporter failures."""


class ConditionalModelError(ExporterError):
    """The checkpoint's discriminator is class-conditional (unsupported)."""


class UnsupportedArchitectureError(ExporterError):
    """Tensor shapes do not match any supported architecture."""


class MissingTensorError(ExporterError):
    """A required discriminator tensor is absent from the checkpoint."""


class EngineMissingError(ExporterError):
    """The discdream engine executable is not on PATH."""
