"""Exception hierarchy shared across the package."""


class DiscDreamError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DiscDreamError, ValueError):
    """A tensor argument has an incompatible shape; the message names the axis."""


class ArgumentError(DiscDreamError, ValueError):
    """An argument value is out of range."""


class ConfigError(DiscDreamError, ValueError):
    """An architecture or run configuration is invalid or unusable."""


class UnknownLayerError(DiscDreamError, KeyError):
    """A tap refers to a layer that does not exist in the graph."""

    def __init__(self, name, valid_names):
        self.name = name
        self.valid_names = list(valid_names)
        super().__init__(
            "unknown layer %r; valid layers: %s" % (name, ", ".join(self.valid_names))
        )

    def __str__(self):
        return self.args[0]


class SizeError(DiscDreamError, ValueError):
    """An image is too small for the requested taps."""


class WeightsError(DiscDreamError):
    """Base class for DDRW weight-file problems."""


class BadMagicError(WeightsError):
    pass


class UnsupportedVersionError(WeightsError):
    pass


class TruncatedFileError(WeightsError):
    def __init__(self, offset, message=""):
        self.offset = offset
        super().__init__(message or "file truncated at byte offset %d" % offset)


class RecordShapeError(WeightsError):
    pass


class MissingRecordError(WeightsError):
    pass


class ExtraRecordError(WeightsError):
    pass
