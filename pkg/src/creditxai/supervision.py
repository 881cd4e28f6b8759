"""Supervisory trace: append-only record of every pipeline stage.

One JSONL line per stage invocation, flushed on write, with monotonic
start/end timestamps and input/output digests. Verification replays a
trace against the expected company-years and reports completeness,
dependency-order, and unresolved-error violations as data rather than
exceptions.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import IoFailure
from .ratings import CompanyYearKey


class Stage(str, Enum):
    INGEST = "INGEST"
    FEATURES = "FEATURES"
    HISTORY = "HISTORY"
    FRA_QUANT = "FRA_QUANT"
    BRA = "BRA"
    FRA = "FRA"
    GRA_INIT = "GRA_INIT"
    CRA = "CRA"
    GRA_ADJ = "GRA_ADJ"
    CAA = "CAA"
    RRA = "RRA"


ALL_STAGES: tuple[Stage, ...] = tuple(Stage)

# Stage -> stages whose outputs feed its inputs_digest.
STAGE_DEPENDENCIES: dict[Stage, tuple[Stage, ...]] = {
    Stage.INGEST: (),
    Stage.FEATURES: (Stage.INGEST,),
    Stage.HISTORY: (Stage.FEATURES,),
    Stage.FRA_QUANT: (),
    Stage.BRA: (Stage.FEATURES, Stage.HISTORY),
    Stage.FRA: (Stage.FRA_QUANT,),
    Stage.GRA_INIT: (Stage.FEATURES, Stage.HISTORY),
    Stage.CRA: (Stage.BRA, Stage.FRA),
    Stage.GRA_ADJ: (Stage.GRA_INIT, Stage.CRA),
    Stage.CAA: (Stage.BRA, Stage.FRA, Stage.GRA_ADJ, Stage.CRA),
    Stage.RRA: (Stage.CAA,),
}

# Orderings verify_trace enforces (downstream starts after upstream ends).
ORDER_CONSTRAINTS: tuple[tuple[Stage, Stage], ...] = (
    (Stage.BRA, Stage.CRA),
    (Stage.FRA, Stage.CRA),
    (Stage.CRA, Stage.GRA_ADJ),
    (Stage.GRA_ADJ, Stage.CAA),
)


@dataclass(frozen=True)
class TraceEvent:
    run_id: str
    key: CompanyYearKey
    stage: Stage
    inputs_digest: str
    outputs_digest: str
    started: float
    ended: float
    backend_calls: int = 0
    error: str | None = None

    def __post_init__(self):
        if self.ended < self.started:
            raise ValueError("ended must be >= started")

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "key": self.key.as_dict(),
            "stage": self.stage.value,
            "inputs_digest": self.inputs_digest,
            "outputs_digest": self.outputs_digest,
            "started": self.started,
            "ended": self.ended,
            "backend_calls": self.backend_calls,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        return cls(
            run_id=str(d["run_id"]),
            key=CompanyYearKey.from_dict(d["key"]),
            stage=Stage(d["stage"]),
            inputs_digest=str(d["inputs_digest"]),
            outputs_digest=str(d["outputs_digest"]),
            started=float(d["started"]),
            ended=float(d["ended"]),
            backend_calls=int(d.get("backend_calls", 0)),
            error=d.get("error"),
        )


class TraceSink:
    """Serialized appender for one trace file; safe for concurrent workers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a")

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def record_event(self, event: TraceEvent) -> None:
        line = json.dumps(event.as_dict(), sort_keys=True, separators=(",", ":"))
        with self._lock:
            if self._fh is None:
                raise IoFailure(f"trace sink {self.path} is closed")
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
            except (OSError, ValueError) as exc:
                raise IoFailure(f"cannot append trace event: {exc}") from exc

    def __enter__(self) -> "TraceSink":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def record_event(sink: TraceSink, event: TraceEvent) -> None:
    sink.record_event(event)


def load_trace(path: str | Path) -> list[TraceEvent]:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(TraceEvent.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise IoFailure(f"trace line {lineno} unreadable: {exc}") from exc
    return events


@dataclass(frozen=True)
class Violation:
    key: CompanyYearKey | None
    kind: str  # missing_stage | duplicate_stage | ordering | unresolved_error | unexpected_key
    detail: str


@dataclass(frozen=True)
class VerificationReport:
    violations: tuple[Violation, ...]
    keys_checked: int
    events_seen: int

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_trace(
    events: Iterable[TraceEvent],
    expected_keys: Sequence[CompanyYearKey],
    expected_stages: Sequence[Stage] = ALL_STAGES,
) -> VerificationReport:
    """Check stage completeness, dependency order, and error cleanliness."""
    events = list(events)
    by_key: dict[CompanyYearKey, dict[Stage, list[TraceEvent]]] = {}
    for event in events:
        by_key.setdefault(event.key, {}).setdefault(event.stage, []).append(event)

    violations: list[Violation] = []
    expected = set(expected_keys)
    for key in by_key:
        if key not in expected:
            violations.append(Violation(key, "unexpected_key", f"trace holds unexpected key {key}"))
    for key in sorted(expected, key=lambda k: (k.company_id, k.fiscal_year)):
        stages = by_key.get(key, {})
        for stage in expected_stages:
            found = stages.get(stage, [])
            if not found:
                violations.append(Violation(key, "missing_stage", f"missing stage {stage.value}"))
            elif len(found) > 1:
                violations.append(
                    Violation(key, "duplicate_stage", f"stage {stage.value} appears {len(found)} times")
                )
        for event_list in stages.values():
            for event in event_list:
                if event.error:
                    violations.append(
                        Violation(key, "unresolved_error", f"stage {event.stage.value}: {event.error}")
                    )
        for upstream, downstream in ORDER_CONSTRAINTS:
            up, down = stages.get(upstream), stages.get(downstream)
            if up and down and down[0].started < up[0].ended:
                violations.append(
                    Violation(
                        key,
                        "ordering",
                        f"{downstream.value} started at {down[0].started:.6f} "
                        f"before {upstream.value} ended at {up[0].ended:.6f}",
                    )
                )
    return VerificationReport(
        violations=tuple(violations), keys_checked=len(expected), events_seen=len(events)
    )
