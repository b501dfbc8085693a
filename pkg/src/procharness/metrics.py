"""Per-run latency/step accounting and cross-run aggregation."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .model import CallOrigin, Outcome, RunRecord, Verdict

CSV_HEADER = (
    "scenario,approach,model,k,runs,correctness_rate,"
    "lat_min,lat_p25,lat_median,lat_p75,lat_max,lat_mean,mean_n_llm,"
    "err_wrong_tool,err_duplicate,err_premature,err_wrong_order,"
    "err_no_calls,err_other"
)

_ERR_COLUMNS = (
    Outcome.WRONG_TOOL,
    Outcome.DUPLICATE_TOOL,
    Outcome.PREMATURE_STOP,
    Outcome.WRONG_ORDER,
    Outcome.NO_TOOL_CALLS,
    Outcome.OTHER_DEVIATION,
)


def latency_cost_ms(run: RunRecord) -> int:
    """End-to-end cost of a run: model reasoning time plus tool time.

    Internal sub-calls whose interval nests inside an agent-issued call's
    interval are already covered by the parent envelope and are skipped, so
    encapsulated execution is not double-counted.
    """
    total = sum(end - start for start, end in run.llm_steps)
    agent_intervals = [
        (r.started_at, r.ended_at)
        for r in run.trace.records
        if r.origin is CallOrigin.AGENT_ISSUED
    ]
    for rec in run.trace.records:
        if rec.origin is CallOrigin.TOOL_INTERNAL and any(
            start <= rec.started_at and rec.ended_at <= end
            for start, end in agent_intervals
        ):
            continue
        total += rec.duration_ms
    return total


def n_llm_count(run: RunRecord) -> int:
    """Number of model reasoning turns in the run."""
    return len(run.llm_steps)


def n_tool_count(run: RunRecord) -> int:
    """Number of tool invocations the agent issued (all scopes, meta
    included); internal sub-calls execute inside their parent and do not
    count as separate invocations."""
    return sum(1 for r in run.trace.records if r.origin is CallOrigin.AGENT_ISSUED)


@dataclass(frozen=True)
class RunMetrics:
    latency_cost_ms: int
    n_llm: int
    n_tool: int
    reliability: int
    verdict: Verdict


def run_metrics(run: RunRecord, verdict: Verdict) -> RunMetrics:
    return RunMetrics(
        latency_cost_ms=latency_cost_ms(run),
        n_llm=n_llm_count(run),
        n_tool=n_tool_count(run),
        reliability=1 if verdict.outcome is Outcome.CORRECT else 0,
        verdict=verdict,
    )


@dataclass(frozen=True, order=True)
class GroupKey:
    scenario: str
    approach: str
    model_id: str
    k: int


@dataclass(frozen=True)
class GroupSummary:
    key: GroupKey
    runs: int
    correctness_rate: float
    lat_min: float
    lat_p25: float
    lat_median: float
    lat_p75: float
    lat_max: float
    lat_mean: float
    mean_n_llm: float
    error_counts: Mapping[str, int] = field(default_factory=dict)


def _quartiles(values: list[float]) -> tuple[float, float, float]:
    if len(values) == 1:
        v = values[0]
        return v, v, v
    q1, q2, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q1, q2, q3


def summarize(
    rows: Iterable[tuple[GroupKey, RunRecord, Verdict]]
) -> list[GroupSummary]:
    """One summary per distinct group key, ordered by key."""
    groups: dict[GroupKey, list[tuple[RunRecord, Verdict]]] = {}
    for key, run, verdict in rows:
        groups.setdefault(key, []).append((run, verdict))

    summaries = []
    for key in sorted(groups):
        members = groups[key]
        lats = sorted(float(latency_cost_ms(run)) for run, _ in members)
        correct = sum(1 for _, v in members if v.outcome is Outcome.CORRECT)
        errors: dict[str, int] = {}
        for _, v in members:
            if v.outcome is not Outcome.CORRECT:
                errors[v.outcome.value] = errors.get(v.outcome.value, 0) + 1
        q1, q2, q3 = _quartiles(lats)
        summaries.append(
            GroupSummary(
                key=key,
                runs=len(members),
                correctness_rate=correct / len(members),
                lat_min=lats[0],
                lat_p25=q1,
                lat_median=q2,
                lat_p75=q3,
                lat_max=lats[-1],
                lat_mean=statistics.fmean(lats),
                mean_n_llm=statistics.fmean(n_llm_count(run) for run, _ in members),
                error_counts=errors,
            )
        )
    return summaries


def summary_csv_lines(
    summaries: Iterable[GroupSummary], fold_other_into_wrong_order: bool = False
) -> list[str]:
    """Render summaries as CSV rows under the fixed header."""
    lines = [CSV_HEADER]
    for s in summaries:
        errs = dict(s.error_counts)
        if fold_other_into_wrong_order:
            errs[Outcome.WRONG_ORDER.value] = errs.get(
                Outcome.WRONG_ORDER.value, 0
            ) + errs.pop(Outcome.OTHER_DEVIATION.value, 0)
        cols = [
            s.key.scenario,
            s.key.approach,
            s.key.model_id,
            str(s.key.k),
            str(s.runs),
            f"{s.correctness_rate:.6f}",
            f"{s.lat_min:.3f}",
            f"{s.lat_p25:.3f}",
            f"{s.lat_median:.3f}",
            f"{s.lat_p75:.3f}",
            f"{s.lat_max:.3f}",
            f"{s.lat_mean:.3f}",
            f"{s.mean_n_llm:.3f}",
        ]
        cols.extend(str(errs.get(outcome.value, 0)) for outcome in _ERR_COLUMNS)
        lines.append(",".join(cols))
    return lines
