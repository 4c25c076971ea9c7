"""hierlayout: layered graphic compositions as data.

A draft names a canvas and a stack of placed elements; this package parses,
renders, measures, and generates such drafts. See the draft, raster,
metrics, seqcodec, solver, and harness modules, or the hierlayout CLI.
"""

from .draft import CanvasSpec, DraftProtocol, Placement, canonicalize, parse_draft, serialize_draft
from .errors import (
    DecodeError,
    DimensionMismatch,
    DivisibilityError,
    DraftError,
    DraftSyntaxError,
    EmptyCorpus,
    EmptyInput,
    FormatError,
    GeneratorError,
    IdMismatch,
    InvariantError,
    ManifestError,
    MissingAsset,
    SchemaError,
    TransportError,
)
from .metrics import CorpusSummary, MetricReport, corpus_summary, iopr
from .raster import CoverageMask, RgbaImage, composite, decode_png, encode_png
from .solver import SolverConfig, anneal, solve_glg

__version__ = "0.1.0"

__all__ = [
    "CanvasSpec",
    "DraftProtocol",
    "Placement",
    "canonicalize",
    "parse_draft",
    "serialize_draft",
    "DraftError",
    "DraftSyntaxError",
    "SchemaError",
    "InvariantError",
    "DecodeError",
    "MissingAsset",
    "IdMismatch",
    "DimensionMismatch",
    "EmptyCorpus",
    "DivisibilityError",
    "EmptyInput",
    "ManifestError",
    "GeneratorError",
    "TransportError",
    "FormatError",
    "CorpusSummary",
    "MetricReport",
    "corpus_summary",
    "iopr",
    "CoverageMask",
    "RgbaImage",
    "composite",
    "decode_png",
    "encode_png",
    "SolverConfig",
    "anneal",
    "solve_glg",
    "__version__",
]
