"""Core domain model: tools, procedures, traces, runs, and verdicts.

Everything here is immutable after construction and safe to share across
concurrent run workers. Timestamps are monotonic milliseconds taken from an
injectable clock so simulated runs are exactly reproducible.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator, Mapping

TOOL_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")


class ToolScope(str, Enum):
    PROCEDURE = "procedure"
    META = "meta"
    ENCAPSULATED = "encapsulated"


class ValueKind(str, Enum):
    STRING = "string"
    INTEGER = "integer"
    ENUM = "enum"


class CallOrigin(str, Enum):
    AGENT_ISSUED = "agent_issued"
    TOOL_INTERNAL = "tool_internal"


class Approach(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"


class TerminatedReason(str, Enum):
    MODEL_FINISHED = "model_finished"
    TURN_CAP_HIT = "turn_cap_hit"
    BACKEND_ERROR = "backend_error"


class Outcome(str, Enum):
    CORRECT = "Correct"
    WRONG_TOOL = "WrongTool"
    DUPLICATE_TOOL = "DuplicateTool"
    PREMATURE_STOP = "PrematureStop"
    WRONG_ORDER = "WrongOrder"
    NO_TOOL_CALLS = "NoToolCalls"
    OTHER_DEVIATION = "OtherDeviation"


class WrongToolKind(str, Enum):
    TOOL_OUTSIDE_PROCEDURE = "tool_outside_procedure"
    WRONG_TOOL_NAME = "wrong_tool_name"
    WRONG_PARAMETERS = "wrong_parameters"


class ModelError(ValueError):
    """Invalid construction of a domain value."""


# ---------------------------------------------------------------------------
# Tool specs and registry


@dataclass(frozen=True)
class ParamSpec:
    """One declared parameter of a tool."""

    name: str
    kind: ValueKind = ValueKind.STRING
    required: bool = True
    enum_values: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind is ValueKind.ENUM and not self.enum_values:
            raise ModelError(f"enum param {self.name!r} needs enum_values")

    def accepts(self, value: Any) -> bool:
        if self.kind is ValueKind.STRING:
            return isinstance(value, str)
        if self.kind is ValueKind.INTEGER:
            return isinstance(value, int) and not isinstance(value, bool)
        return isinstance(value, str) and value in (self.enum_values or ())

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "name": self.name,
            "kind": self.kind.value,
            "required": self.required,
        }
        if self.enum_values is not None:
            d["enum_values"] = list(self.enum_values)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ParamSpec":
        enum_values = d.get("enum_values")
        return cls(
            name=d["name"],
            kind=ValueKind(d.get("kind", "string")),
            required=bool(d.get("required", True)),
            enum_values=tuple(enum_values) if enum_values is not None else None,
        )


@dataclass(frozen=True)
class ToolSpec:
    """Schema of one tool exposed by a tool server."""

    name: str
    description: str
    params: tuple[ParamSpec, ...] = ()
    scope: ToolScope = ToolScope.PROCEDURE
    encapsulates: str | None = None

    def __post_init__(self) -> None:
        if not TOOL_NAME_RE.match(self.name):
            raise ModelError(f"invalid tool name {self.name!r}")
        seen = [p.name for p in self.params]
        if len(set(seen)) != len(seen):
            raise ModelError(f"duplicate params in tool {self.name!r}")
        if self.scope is ToolScope.ENCAPSULATED and not self.encapsulates:
            raise ModelError(
                f"encapsulated tool {self.name!r} must name the procedure it executes"
            )

    @property
    def required_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.required)

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "scope": self.scope.value,
        }
        if self.encapsulates is not None:
            d["encapsulates"] = self.encapsulates
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ToolSpec":
        return cls(
            name=d["name"],
            description=d.get("description", ""),
            params=tuple(ParamSpec.from_dict(p) for p in d.get("params", [])),
            scope=ToolScope(d.get("scope", "procedure")),
            encapsulates=d.get("encapsulates"),
        )


class ToolRegistry:
    """Immutable name -> ToolSpec mapping with exact, case-sensitive lookup."""

    def __init__(self, specs: Iterable[ToolSpec]) -> None:
        self._specs: dict[str, ToolSpec] = {}
        for spec in specs:
            if spec.name in self._specs:
                raise ModelError(f"duplicate tool name {spec.name!r}")
            self._specs[spec.name] = spec

    def lookup(self, name: str) -> ToolSpec | None:
        return self._specs.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def __iter__(self) -> Iterator[ToolSpec]:
        return iter(self._specs.values())

    def __len__(self) -> int:
        return len(self._specs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._specs)

    def merged(self, other: "ToolRegistry") -> "ToolRegistry":
        return ToolRegistry(list(self) + list(other))


def normalize_arguments(arguments: Mapping[str, Any]) -> dict[str, Any]:
    """Lexical normalization only: trim whitespace around string values."""
    return {
        k: v.strip() if isinstance(v, str) else v for k, v in arguments.items()
    }


def validate_arguments(spec: ToolSpec, arguments: Mapping[str, Any]) -> list[str]:
    """Check arguments against a tool schema.

    Returns a list of problems (empty means valid). Parameters not declared
    by the tool are passed through untouched and not reported.
    """
    problems = []
    for p in spec.params:
        if p.name not in arguments:
            if p.required:
                problems.append(f"missing required parameter {p.name!r}")
            continue
        value = arguments[p.name]
        if not p.accepts(value):
            if p.kind is ValueKind.ENUM:
                problems.append(
                    f"parameter {p.name!r} must be one of {list(p.enum_values or ())}, got {value!r}"
                )
            else:
                problems.append(
                    f"parameter {p.name!r} must be a {p.kind.value}, got {value!r}"
                )
    return problems


# ---------------------------------------------------------------------------
# Procedures


@dataclass(frozen=True)
class AnyValue:
    """Wildcard argument constraint: the parameter must be present with the
    given value kind, but any concrete value is accepted."""

    kind: ValueKind = ValueKind.STRING

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind.value}


Constraint = Any  # scalar (exact match) or AnyValue (wildcard)


def constraint_to_jsonable(c: Constraint) -> Any:
    return c.to_dict() if isinstance(c, AnyValue) else c


def constraint_from_jsonable(v: Any) -> Constraint:
    if isinstance(v, Mapping):
        return AnyValue(kind=ValueKind(v.get("kind", "string")))
    return v


def constraint_satisfied(constraint: Constraint, value: Any) -> bool:
    if isinstance(constraint, AnyValue):
        if constraint.kind is ValueKind.INTEGER:
            return isinstance(value, int) and not isinstance(value, bool)
        return isinstance(value, str)
    return value == constraint


@dataclass(frozen=True)
class ExpectedStep:
    """One expected tool call: a tool name plus per-parameter constraints.

    A parameter absent from ``arg_constraints`` is ignored entirely during
    conformance checking. Procedure generators constrain every required
    parameter (exact where the intent binds it, ``AnyValue`` otherwise).
    """

    tool_name: str
    arg_constraints: Mapping[str, Constraint] = field(default_factory=dict)

    def satisfied_by(self, arguments: Mapping[str, Any]) -> bool:
        return all(
            name in arguments and constraint_satisfied(c, arguments[name])
            for name, c in self.arg_constraints.items()
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool_name": self.tool_name,
            "arg_constraints": {
                k: constraint_to_jsonable(v) for k, v in self.arg_constraints.items()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExpectedStep":
        return cls(
            tool_name=d["tool_name"],
            arg_constraints={
                k: constraint_from_jsonable(v)
                for k, v in d.get("arg_constraints", {}).items()
            },
        )


@dataclass(frozen=True)
class Procedure:
    """Ground-truth ordered tool-call sequence answering one intent family."""

    procedure_id: str
    intent_key: str
    steps: tuple[ExpectedStep, ...]

    def __post_init__(self) -> None:
        if len(self.steps) < 1:
            raise ModelError("a procedure needs at least one step")

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def tool_names(self) -> tuple[str, ...]:
        return tuple(s.tool_name for s in self.steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "procedure_id": self.procedure_id,
            "intent_key": self.intent_key,
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Procedure":
        return cls(
            procedure_id=d["procedure_id"],
            intent_key=d["intent_key"],
            steps=tuple(ExpectedStep.from_dict(s) for s in d["steps"]),
        )


# ---------------------------------------------------------------------------
# Intents, traces, runs


@dataclass(frozen=True)
class Intent:
    """A user request, both as natural language and as structured fields."""

    intent_key: str
    text: str
    structured: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "intent_key": self.intent_key,
            "text": self.text,
            "structured": dict(self.structured),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Intent":
        return cls(
            intent_key=d["intent_key"],
            text=d.get("text", ""),
            structured=dict(d.get("structured", {})),
        )


@dataclass(frozen=True)
class ToolCallRecord:
    """One executed tool call as captured in a trace.

    ``tool_name`` is the name as issued by the model, which may be unknown
    or hallucinated. ``origin`` distinguishes agent-issued calls from the
    internal sub-calls an encapsulated tool reports.
    """

    step_index: int
    tool_name: str
    arguments: Mapping[str, Any]
    result: Any
    success: bool
    started_at: int
    ended_at: int
    origin: CallOrigin = CallOrigin.AGENT_ISSUED

    def __post_init__(self) -> None:
        if self.ended_at < self.started_at:
            raise ModelError("tool call ended before it started")

    @property
    def duration_ms(self) -> int:
        return self.ended_at - self.started_at

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_index": self.step_index,
            "tool_name": self.tool_name,
            "arguments": dict(self.arguments),
            "result": self.result,
            "success": self.success,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "origin": self.origin.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ToolCallRecord":
        return cls(
            step_index=d["step_index"],
            tool_name=d["tool_name"],
            arguments=dict(d.get("arguments", {})),
            result=d.get("result"),
            success=bool(d.get("success", False)),
            started_at=d["started_at"],
            ended_at=d["ended_at"],
            origin=CallOrigin(d.get("origin", "agent_issued")),
        )


@dataclass(frozen=True)
class ObservedTrace:
    """Ordered record of the tool calls a run actually executed."""

    records: tuple[ToolCallRecord, ...] = ()

    def __post_init__(self) -> None:
        indices = [r.step_index for r in self.records]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ModelError("step_index must be strictly increasing")
        agent_starts = [
            r.started_at for r in self.records if r.origin is CallOrigin.AGENT_ISSUED
        ]
        if any(b < a for a, b in zip(agent_starts, agent_starts[1:])):
            raise ModelError("agent-issued calls must not go back in time")

    @property
    def length(self) -> int:
        return len(self.records)

    @property
    def tool_names(self) -> tuple[str, ...]:
        return tuple(r.tool_name for r in self.records)

    def to_dict(self) -> dict[str, Any]:
        return {"records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ObservedTrace":
        return cls(records=tuple(ToolCallRecord.from_dict(r) for r in d.get("records", [])))


@dataclass(frozen=True)
class RunRecord:
    """One end-to-end agent execution of an intent."""

    run_id: str
    approach: Approach
    model_id: str
    intent: Intent
    trace: ObservedTrace
    llm_steps: tuple[tuple[int, int], ...]
    final_text: str = ""
    terminated_reason: TerminatedReason = TerminatedReason.MODEL_FINISHED

    def __post_init__(self) -> None:
        if (
            self.terminated_reason is TerminatedReason.MODEL_FINISHED
            and len(self.llm_steps) < 1
        ):
            raise ModelError("a finished run needs at least one model invocation")

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "approach": self.approach.value,
            "model_id": self.model_id,
            "intent": self.intent.to_dict(),
            "trace": self.trace.to_dict(),
            "llm_steps": [list(t) for t in self.llm_steps],
            "final_text": self.final_text,
            "terminated_reason": self.terminated_reason.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunRecord":
        return cls(
            run_id=d["run_id"],
            approach=Approach(d["approach"]),
            model_id=d["model_id"],
            intent=Intent.from_dict(d["intent"]),
            trace=ObservedTrace.from_dict(d["trace"]),
            llm_steps=tuple((s[0], s[1]) for s in d.get("llm_steps", [])),
            final_text=d.get("final_text", ""),
            terminated_reason=TerminatedReason(d.get("terminated_reason", "model_finished")),
        )


@dataclass(frozen=True)
class Verdict:
    """Classification of one run: Correct or a single taxonomy error class."""

    outcome: Outcome
    wrong_tool_subclass: WrongToolKind | None = None
    detail: str = ""
    offending_step: int | None = None

    def __post_init__(self) -> None:
        if (self.outcome is Outcome.WRONG_TOOL) != (self.wrong_tool_subclass is not None):
            raise ModelError("wrong_tool_subclass is present iff outcome is WrongTool")

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome": self.outcome.value,
            "wrong_tool_subclass": (
                self.wrong_tool_subclass.value if self.wrong_tool_subclass else None
            ),
            "detail": self.detail,
            "offending_step": self.offending_step,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Verdict":
        sub = d.get("wrong_tool_subclass")
        return cls(
            outcome=Outcome(d["outcome"]),
            wrong_tool_subclass=WrongToolKind(sub) if sub else None,
            detail=d.get("detail", ""),
            offending_step=d.get("offending_step"),
        )


# ---------------------------------------------------------------------------
# Trace views


class TraceLevel(str, Enum):
    AGENT = "agent"
    FLATTENED = "flattened"


def effective_trace(
    run: RunRecord, level: TraceLevel, registry: ToolRegistry
) -> ObservedTrace:
    """Project a raw run trace to the view conformance checking operates on.

    ``agent`` keeps only agent-issued calls whose tool is not meta-scoped
    (unknown names are kept; they are agent behavior). ``flattened``
    additionally replaces each encapsulated-tool call with its recorded
    internal sub-calls, in order.
    """
    records = run.trace.records
    internals_by_parent: dict[int, list[ToolCallRecord]] = {}
    parent_idx: int | None = None
    for rec in records:
        if rec.origin is CallOrigin.AGENT_ISSUED:
            parent_idx = rec.step_index
        elif parent_idx is not None:
            internals_by_parent.setdefault(parent_idx, []).append(rec)

    out: list[ToolCallRecord] = []
    for rec in records:
        if rec.origin is not CallOrigin.AGENT_ISSUED:
            continue
        spec = registry.lookup(rec.tool_name)
        if spec is not None and spec.scope is ToolScope.META:
            continue
        if (
            level is TraceLevel.FLATTENED
            and spec is not None
            and spec.scope is ToolScope.ENCAPSULATED
        ):
            out.extend(internals_by_parent.get(rec.step_index, []))
        else:
            out.append(rec)
    return ObservedTrace(records=tuple(out))


# ---------------------------------------------------------------------------
# Clocks


class MonotonicClock:
    """Wall clock: monotonic milliseconds. ``advance`` is a no-op because
    real time passes on its own."""

    def now_ms(self) -> int:
        return time.monotonic_ns() // 1_000_000

    def advance(self, ms: int) -> None:
        pass


class VirtualClock:
    """Deterministic clock for simulated runs; moves only when told to."""

    def __init__(self, start_ms: int = 0) -> None:
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, ms: int) -> None:
        if ms < 0:
            raise ValueError("cannot move a clock backwards")
        self._now += ms
