"""Onion-routed sensor network queries with decoys: protocol core, simulator
and adversary harness (native extension)."""

from ._core import (
    Error,
    adversary_findings,
    body_size_for,
    compile_request,
    disclosure_rate,
    external_view,
    head_size_for,
    parse_request,
    run_query,
    simulate,
)

__all__ = [
    "Error",
    "adversary_findings",
    "body_size_for",
    "compile_request",
    "disclosure_rate",
    "external_view",
    "head_size_for",
    "parse_request",
    "run_query",
    "simulate",
]
