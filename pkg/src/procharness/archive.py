"""Line-delimited run archives: one self-contained JSON document per run."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

from .model import Procedure, RunRecord, Verdict


@dataclass(frozen=True)
class RunDocument:
    """A run plus its ground truth and (after classification) verdicts.

    ``expected`` is the conformance target at the agent level; for runs of
    the tool-encapsulated approach ``expected_flattened`` additionally holds
    the step-level procedure the internal execution must match.
    """

    run: RunRecord
    scenario: str
    k: int
    expected: Procedure
    expected_flattened: Procedure | None = None
    verdict_agent: Verdict | None = None
    verdict_flattened: Verdict | None = None

    def with_verdicts(
        self, verdict_agent: Verdict, verdict_flattened: Verdict | None = None
    ) -> "RunDocument":
        return replace(
            self, verdict_agent=verdict_agent, verdict_flattened=verdict_flattened
        )

    def to_dict(self) -> dict[str, Any]:
        doc = self.run.to_dict()
        doc["scenario"] = self.scenario
        doc["k"] = self.k
        doc["expected"] = self.expected.to_dict()
        doc["expected_flattened"] = (
            self.expected_flattened.to_dict() if self.expected_flattened else None
        )
        doc["verdict_agent"] = self.verdict_agent.to_dict() if self.verdict_agent else None
        doc["verdict_flattened"] = (
            self.verdict_flattened.to_dict() if self.verdict_flattened else None
        )
        return doc

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunDocument":
        return cls(
            run=RunRecord.from_dict(d),
            scenario=d["scenario"],
            k=int(d["k"]),
            expected=Procedure.from_dict(d["expected"]),
            expected_flattened=(
                Procedure.from_dict(d["expected_flattened"])
                if d.get("expected_flattened")
                else None
            ),
            verdict_agent=(
                Verdict.from_dict(d["verdict_agent"]) if d.get("verdict_agent") else None
            ),
            verdict_flattened=(
                Verdict.from_dict(d["verdict_flattened"])
                if d.get("verdict_flattened")
                else None
            ),
        )


def append_document(path: Path, doc: RunDocument) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(doc.to_dict(), sort_keys=True) + "\n")


def iter_lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def existing_run_ids(path: Path) -> set[str]:
    """Run ids already present in an archive (for resumable batches)."""
    ids: set[str] = set()
    if not path.exists():
        return ids
    for _, line in iter_lines(path):
        try:
            ids.add(json.loads(line)["run_id"])
        except (json.JSONDecodeError, KeyError):
            continue
    return ids


def load_documents(path: Path) -> list[RunDocument]:
    return [RunDocument.from_dict(json.loads(line)) for _, line in iter_lines(path)]
