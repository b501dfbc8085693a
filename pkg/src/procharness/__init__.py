"""procharness: execute multi-step network procedures with tool-calling
agents, record full traces, and classify every run against ground truth."""

__version__ = "0.1.0"

from .classify import classify, reliability, validate_call
from .metrics import latency_cost_ms, n_llm_count, summarize
from .model import (
    Approach,
    Intent,
    ObservedTrace,
    Outcome,
    Procedure,
    RunRecord,
    ToolCallRecord,
    ToolRegistry,
    ToolSpec,
    Verdict,
    effective_trace,
)
from .reference import reference_classify

__all__ = [
    "Approach",
    "Intent",
    "ObservedTrace",
    "Outcome",
    "Procedure",
    "RunRecord",
    "ToolCallRecord",
    "ToolRegistry",
    "ToolSpec",
    "Verdict",
    "classify",
    "effective_trace",
    "latency_cost_ms",
    "n_llm_count",
    "reference_classify",
    "reliability",
    "summarize",
    "validate_call",
]
