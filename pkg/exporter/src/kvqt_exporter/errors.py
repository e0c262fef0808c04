"""Error taxonomy for the trace exporter."""


class ExporterError(Exception):
    """Base class for every error this package raises deliberately."""


class InvalidRequest(ExporterError):
    """An export request violates its own invariants."""


class IncompatibleModel(ExporterError):
    """The model cannot be loaded or its attention modules cannot be hooked."""


class ExportFailure(ExporterError):
    """The capture or write failed mid-flight; no partial trace file remains."""
