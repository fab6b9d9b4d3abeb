"""Stochastic ensemble calculus: syntax, FuTS semantics and CTMC analysis."""
from .actor import ActOr
from .futs import ContinuationFunction
from .knowledge import KnowledgeState, TupleSpace, make_repository
from .netor import NetOr, make_semantics
from .rates import RateConfig
from .syntax import build, check_model, format_model, parse_model

__all__ = [
    "ActOr", "ContinuationFunction", "KnowledgeState", "NetOr", "RateConfig", "TupleSpace",
    "build", "check_model", "format_model", "make_repository", "make_semantics", "parse_model",
]
__version__ = "0.1.0"
