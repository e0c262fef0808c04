"""Capture pre-rotation attention tensors from a checkpoint into .kvqt traces."""

from .capture import CaptureSession, decoder_layers, model_geometry, split_heads
from .errors import ExporterError, ExportFailure, IncompatibleModel, InvalidRequest
from .export import (
    FIDELITY_TOLERANCE,
    ExportReport,
    ExportRequest,
    export_trace,
    sidecar_path,
)
from .layout import from_interleaved, rotate_interleaved, to_interleaved
from .writer import (
    ROPE_LAYOUT_HALF_SPLIT,
    ROPE_LAYOUT_INTERLEAVED,
    write_kvqt,
)

__all__ = [
    "CaptureSession",
    "ExportFailure",
    "ExportReport",
    "ExportRequest",
    "ExporterError",
    "FIDELITY_TOLERANCE",
    "IncompatibleModel",
    "InvalidRequest",
    "ROPE_LAYOUT_HALF_SPLIT",
    "ROPE_LAYOUT_INTERLEAVED",
    "decoder_layers",
    "export_trace",
    "from_interleaved",
    "model_geometry",
    "rotate_interleaved",
    "sidecar_path",
    "split_heads",
    "to_interleaved",
    "write_kvqt",
]
