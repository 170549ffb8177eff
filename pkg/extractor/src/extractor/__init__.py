"""Standalone embedding extractor for planned benchmark runs.

Consumes a run directory produced by the harness (plan.json plus the
warped PNG tree) and writes the EMB1 embedding files its evaluation
step expects, using either offline feature backends or pretrained
checkpoints pulled from public model hubs.
"""

from .backends import SPECS, BackendSpec, get, load, names
from .emb1 import write_emb1
from .errors import (
    ChecksumMismatch,
    DimMismatch,
    ExtractorError,
    HubUnavailable,
    InvalidPlan,
    RefusedOverwrite,
    UnknownBackend,
)
from .runner import extract_run, load_plan

__all__ = [
    "BackendSpec",
    "SPECS",
    "get",
    "load",
    "names",
    "write_emb1",
    "extract_run",
    "load_plan",
    "ExtractorError",
    "HubUnavailable",
    "ChecksumMismatch",
    "DimMismatch",
    "InvalidPlan",
    "UnknownBackend",
    "RefusedOverwrite",
]

__version__ = "0.1.0"
