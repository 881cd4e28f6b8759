"""LLM-backed analytical agents and the chat-gateway abstraction.

Each agent turns pipeline data into a prompt, sends it through a
ChatBackend, and parses the response's fenced JSON verdict back into a
RiskSignal. The mock backend is a pure function of (inputs, seed) so the
whole pipeline can run deterministically offline; the HTTP backend talks
to any chat-completion endpoint with bounded retries.

Verdict contract given to the model, bit-exact: one fenced JSON block
with keys grade (string), score (number in [0,1]), rationale (string),
optional adjustment (integer notches, positive = upgrade), optional
confidence (number in [0,1]).
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

import requests

from .errors import BackendUnavailable, MalformedVerdict
from .features import ItemFeatures
from .filings import FilingItem
from .fra_quant import DEV_STATUS_OK, DeviationReport
from .history import HistoryWindow, SimilarityWeights, render_history_context
from .ratings import (
    AgentId,
    CompanyYearKey,
    RatingGrade,
    RiskScore,
    RiskSignal,
    digest_of,
    grade_to_score,
    score_to_grade,
    shift_grade,
)

DEFAULT_BUSINESS_ITEMS = frozenset({"1", "1A", "7", "7A"})
DEFAULT_GOVERNANCE_ITEMS = frozenset({"10", "11", "13", "9A"})
DEFAULT_RETRIES = 2
NO_HISTORY_MARKER = "NO PRIOR YEARS AVAILABLE"
FRA_OVERRIDE_LIMIT = 1   # notches around the quant proposal
GRA_ADJUSTMENT_LIMIT = 2

_EXCERPT_CHARS = 280

VERDICT_SCHEMA_TEXT = (
    'Respond with exactly one fenced JSON block: {"grade": "AAA|AA|A|BBB|BB|B|CCC|C", '
    '"score": <number in [0,1], higher = riskier>, "rationale": "<short text>"'
    ', optional "adjustment": <integer notches, positive = upgrade>'
    ', optional "confidence": <number in [0,1]>}.'
)


@dataclass(frozen=True)
class ChatParams:
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int = 0


class ChatBackend(Protocol):
    def complete(self, system_text: str, user_text: str, params: ChatParams) -> str: ...


@dataclass(frozen=True)
class AgentVerdict:
    """Parsed model response; overridden marks a grade/score mapping mismatch."""

    grade: RatingGrade
    score: RiskScore
    rationale: str
    adjustment: int | None = None
    confidence: float = 0.5
    overridden: bool = False


@dataclass(frozen=True)
class AgentContext:
    """Everything one agent invocation sees; hashes into inputs_digest."""

    key: CompanyYearKey
    items: Mapping[str, FilingItem] = field(default_factory=dict)
    item_features: Mapping[str, ItemFeatures] = field(default_factory=dict)
    window: HistoryWindow | None = None
    weights: SimilarityWeights | None = None
    deviation_report: DeviationReport | None = None
    quant_proposal: tuple[int, str] | None = None
    prev_grade: RatingGrade | None = None

    def digest(self, agent_id: AgentId, item_ids: frozenset[str] | None = None) -> str:
        payload: dict = {"agent": agent_id.value, "key": self.key.as_dict()}
        ids = sorted(item_ids & self.items.keys()) if item_ids is not None else sorted(self.items)
        payload["items"] = [
            {
                "item_id": i,
                "body_digest": digest_of(self.items[i].body),
                "sentiment": self.item_features[i].sentiment if i in self.item_features else None,
            }
            for i in ids
        ]
        if self.window is not None and not self.window.empty:
            payload["window"] = [
                {"year": e.year, "grade": e.grade.value} for e in self.window.entries
            ]
        if self.weights is not None:
            payload["weights"] = [[y, s, w] for y, s, w in self.weights.per_year]
        if self.deviation_report is not None:
            payload["deviations"] = [
                [e.indicator, e.value, e.baseline, e.dev, e.status]
                for e in self.deviation_report.entries
            ]
            payload["yoy"] = sorted(self.deviation_report.yoy.items())
        if self.quant_proposal is not None:
            payload["proposal"] = list(self.quant_proposal)
        if self.prev_grade is not None:
            payload["prev_grade"] = self.prev_grade.value
        return digest_of(payload)


# ---------------------------------------------------------------------------
# Verdict parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def parse_verdict(text: str) -> AgentVerdict:
    """Extract and validate the first fenced JSON verdict block."""
    m = _FENCE_RE.search(text)
    if not m:
        raise MalformedVerdict("no fenced JSON block in response", fragment=text[:200])
    fragment = m.group(1).strip()
    try:
        data = json.loads(fragment)
    except json.JSONDecodeError as exc:
        raise MalformedVerdict(f"invalid JSON in verdict block: {exc}", fragment=fragment[:200]) from exc
    if not isinstance(data, dict):
        raise MalformedVerdict("verdict block is not a JSON object", fragment=fragment[:200])
    missing = {"grade", "score", "rationale"} - data.keys()
    if missing:
        raise MalformedVerdict(f"verdict missing keys {sorted(missing)}", fragment=fragment[:200])
    try:
        grade = RatingGrade.parse(str(data["grade"]))
        score = RiskScore(float(data["score"]))
    except (TypeError, ValueError) as exc:
        raise MalformedVerdict(str(exc), fragment=fragment[:200]) from exc
    adjustment = data.get("adjustment")
    if adjustment is not None:
        if isinstance(adjustment, bool) or not isinstance(adjustment, int):
            raise MalformedVerdict(
                f"adjustment must be an integer, got {adjustment!r}", fragment=fragment[:200]
            )
    confidence = data.get("confidence", 0.5)
    try:
        confidence = float(confidence)
    except (TypeError, ValueError):
        raise MalformedVerdict(f"confidence not numeric: {confidence!r}", fragment=fragment[:200]) from None
    if not 0.0 <= confidence <= 1.0:
        raise MalformedVerdict(f"confidence outside [0,1]: {confidence}", fragment=fragment[:200])
    return AgentVerdict(
        grade=grade,
        score=score,
        rationale=str(data["rationale"]),
        adjustment=adjustment,
        confidence=confidence,
        overridden=score_to_grade(score) is not grade,
    )


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class MockChatBackend:
    """Deterministic rule-table backend for offline runs.

    Rules are (regex pattern, canned response) pairs matched in order
    against system + user text; the first hit wins. Unmatched prompts
    get a schema-valid verdict whose grade comes from hashing the prompt
    and seed, stable across runs.
    """

    def __init__(self, rules: list[tuple[str, str]] | None = None, seed: int = 0):
        self.seed = seed
        self.calls = 0
        self._rules = [(re.compile(p, re.DOTALL), r) for p, r in (rules or [])]

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        data = json.loads(Path(path).read_text())
        rules = [(r["pattern"], r["response"]) for r in data.get("rules", [])]
        return cls(rules=rules, seed=int(data.get("seed", 0)))

    def complete(self, system_text: str, user_text: str, params: ChatParams) -> str:
        self.calls += 1
        prompt = system_text + "\n" + user_text
        for pattern, response in self._rules:
            if pattern.search(prompt):
                return response
        digest = digest_of({"seed": self.seed, "prompt": prompt})
        grade = RatingGrade.from_index(int(digest[:8], 16) % 8)
        verdict = {
            "grade": grade.value,
            "score": grade_to_score(grade).value,
            "rationale": f"fallback verdict {digest[:8]}",
            "adjustment": 0,
        }
        return "```json\n" + json.dumps(verdict) + "\n```"


class HttpChatBackend:
    """Chat-completion client with bounded retry, backoff, and an in-flight cap."""

    def __init__(
        self,
        url: str,
        model: str,
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        api_key_env: str = "CREDITXAI_API_KEY",
        session: requests.Session | None = None,
    ):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._gate = threading.Semaphore(max_in_flight)
        self._session = session or requests.Session()
        self._api_key = os.environ.get(api_key_env, "")

    def complete(self, system_text: str, user_text: str, params: ChatParams) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": params.temperature,
            "seed": params.seed,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            with self._gate:
                try:
                    resp = self._session.post(
                        self.url, json=body, headers=headers, timeout=self.timeout
                    )
                    resp.raise_for_status()
                    return self._first_text(resp.json())
                except (requests.RequestException, KeyError, IndexError, TypeError) as exc:
                    last_error = exc
        raise BackendUnavailable(f"chat backend failed after {self.retries + 1} attempts: {last_error}")

    @staticmethod
    def _first_text(payload: dict) -> str:
        choice = payload["choices"][0]
        message = choice.get("message") or {}
        content = message.get("content", choice.get("text"))
        if not isinstance(content, str):
            raise KeyError("no text content in response")
        return content


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

def _excerpt(body: str) -> str:
    return " ".join(body.split())[:_EXCERPT_CHARS]


def _render_items(ctx: AgentContext, item_ids: frozenset[str]) -> str:
    lines = []
    for item_id in sorted(item_ids & ctx.items.keys()):
        item = ctx.items[item_id]
        feats = ctx.item_features.get(item_id)
        tone = f"{feats.sentiment:+.2f}" if feats is not None else "n/a"
        lines.append(f"- Item {item_id} ({item.title or 'untitled'}) [sentiment {tone}]: {_excerpt(item.body)}")
    return "\n".join(lines)


def _render_history(ctx: AgentContext) -> str:
    if ctx.window is None or ctx.window.empty or ctx.weights is None:
        return NO_HISTORY_MARKER
    return render_history_context(ctx.window, ctx.weights)


def _company_header(agent: str, key: CompanyYearKey) -> str:
    return f"AGENT: {agent}\nCompany: {key.company_id} | Sector: {key.sector} | Fiscal year: {key.fiscal_year}"


def build_text_agent_prompt(agent_id: AgentId, role_text: str, ctx: AgentContext, item_ids: frozenset[str]) -> tuple[str, str]:
    system = f"You are the {role_text} on a corporate credit committee. {VERDICT_SCHEMA_TEXT}"
    user = "\n".join(
        [
            _company_header(agent_id.value, ctx.key),
            "CURRENT FILING ITEMS:",
            _render_items(ctx, item_ids),
            _render_history(ctx),
            "Weigh historically similar years more heavily when reading the current disclosure.",
            "Respond with the JSON verdict now.",
        ]
    )
    return system, user


def build_fra_prompt(ctx: AgentContext, base_grade: RatingGrade, cold_start: bool) -> tuple[str, str]:
    system = (
        "You are the financial risk analyst on a corporate credit committee. "
        "Confirm or adjust the quantitative proposal; stay within one notch of it. "
        + VERDICT_SCHEMA_TEXT
    )
    report = ctx.deviation_report
    assert report is not None
    dev_lines = []
    for e in report.entries:
        if e.status == DEV_STATUS_OK:
            yoy = report.yoy.get(e.indicator)
            yoy_text = f", yoy {yoy:+.3f}" if yoy is not None else ""
            dev_lines.append(
                f"- {e.indicator}: value {e.value:.4g}, baseline {e.baseline:.4g}, dev {e.dev:+.3f}{yoy_text}"
            )
        else:
            dev_lines.append(f"- {e.indicator}: {e.status}")
    delta, quant_rationale = ctx.quant_proposal or (0, "no proposal")
    anchor_line = (
        f"COLD START: no prior rating; anchor grade {base_grade.value}"
        if cold_start
        else f"Prior grade: {base_grade.value}"
    )
    user = "\n".join(
        [
            _company_header("FRA", ctx.key),
            "INDICATOR DEVIATIONS vs sector baseline:",
            *dev_lines,
            anchor_line,
            f"QUANT PROPOSAL: notch_delta={delta:+d} -> {shift_grade(base_grade, delta).value} ({quant_rationale})",
            "Respond with the JSON verdict now.",
        ]
    )
    return system, user


def build_gra_adjust_prompt(
    gra_initial: RiskSignal, cra_signal: RiskSignal, key: CompanyYearKey | None
) -> tuple[str, str]:
    system = (
        "You are the governance risk analyst reviewing the committee's composite rating. "
        "Decide whether governance evidence warrants a notch adjustment to the composite. "
        + VERDICT_SCHEMA_TEXT
    )
    header = _company_header("GRA-ADJUST", key) if key is not None else "AGENT: GRA-ADJUST"
    user = "\n".join(
        [
            header,
            f"Initial governance grade: {gra_initial.grade.value} (score {gra_initial.score.value:.4f})",
            f"Composite grade: {cra_signal.grade.value} (score {cra_signal.score.value:.4f})",
            f"Governance rationale: {gra_initial.rationale}",
            'Return "adjustment" as integer notches applied to the composite grade '
            "(positive = upgrade, negative = downgrade, at most 2 either way).",
            "Respond with the JSON verdict now.",
        ]
    )
    return system, user


# ---------------------------------------------------------------------------
# Agent runners
# ---------------------------------------------------------------------------

def _complete_with_retry(
    backend: ChatBackend, system: str, user: str, params: ChatParams, retries: int
) -> AgentVerdict:
    last: MalformedVerdict | None = None
    for _ in range(retries + 1):
        text = backend.complete(system, user, params)
        try:
            return parse_verdict(text)
        except MalformedVerdict as exc:
            last = exc
    assert last is not None
    raise last


def _run_text_agent(
    agent_id: AgentId,
    role_text: str,
    ctx: AgentContext,
    backend: ChatBackend,
    item_ids: frozenset[str],
    params: ChatParams,
    retries: int,
) -> RiskSignal:
    available = item_ids & ctx.items.keys()
    if not available:
        raise ValueError(f"{agent_id.value}: none of items {sorted(item_ids)} present in context")
    system, user = build_text_agent_prompt(agent_id, role_text, ctx, item_ids)
    verdict = _complete_with_retry(backend, system, user, params, retries)
    flags = () if ctx.window is not None and not ctx.window.empty else ("no_history",)
    return RiskSignal(
        agent_id=agent_id,
        grade=verdict.grade,
        score=verdict.score,
        rationale=verdict.rationale,
        inputs_digest=ctx.digest(agent_id, item_ids),
        grade_overridden=verdict.overridden,
        flags=flags,
    )


def run_bra(
    ctx: AgentContext,
    backend: ChatBackend,
    params: ChatParams = ChatParams(),
    retries: int = DEFAULT_RETRIES,
    item_ids: frozenset[str] = DEFAULT_BUSINESS_ITEMS,
) -> RiskSignal:
    """Business risk from core-item semantics plus weighted history."""
    return _run_text_agent(AgentId.BRA, "business risk analyst", ctx, backend, item_ids, params, retries)


def run_gra_initial(
    ctx: AgentContext,
    backend: ChatBackend,
    params: ChatParams = ChatParams(),
    retries: int = DEFAULT_RETRIES,
    item_ids: frozenset[str] = DEFAULT_GOVERNANCE_ITEMS,
) -> RiskSignal:
    """Governance risk from governance-item semantics plus weighted history."""
    return _run_text_agent(AgentId.GRA, "governance risk analyst", ctx, backend, item_ids, params, retries)


def run_fra(
    ctx: AgentContext,
    backend: ChatBackend,
    params: ChatParams = ChatParams(),
    retries: int = DEFAULT_RETRIES,
) -> RiskSignal:
    """Financial risk: the verdict may move at most one notch off the quant proposal."""
    if ctx.deviation_report is None:
        raise ValueError("FRA context requires a deviation report")
    if ctx.quant_proposal is None:
        raise ValueError("FRA context requires a quant proposal")
    cold_start = ctx.prev_grade is None
    base_grade = ctx.prev_grade if ctx.prev_grade is not None else score_to_grade(RiskScore(0.5))
    proposal_grade = shift_grade(base_grade, ctx.quant_proposal[0])
    system, user = build_fra_prompt(ctx, base_grade, cold_start)
    verdict = _complete_with_retry(backend, system, user, params, retries)
    flags: tuple[str, ...] = ("cold_start",) if cold_start else ()
    gap = verdict.grade.index - proposal_grade.index
    if abs(gap) > FRA_OVERRIDE_LIMIT:
        clamped = RatingGrade.from_index(proposal_grade.index + (1 if gap > 0 else -1))
        return RiskSignal(
            agent_id=AgentId.FRA,
            grade=clamped,
            score=grade_to_score(clamped),
            rationale=verdict.rationale + f" [clamped from {verdict.grade.value} to ±1 of proposal]",
            inputs_digest=ctx.digest(AgentId.FRA),
            grade_overridden=True,
            flags=flags + ("override_clamped",),
        )
    return RiskSignal(
        agent_id=AgentId.FRA,
        grade=verdict.grade,
        score=verdict.score,
        rationale=verdict.rationale,
        inputs_digest=ctx.digest(AgentId.FRA),
        grade_overridden=verdict.overridden,
        flags=flags,
    )


def run_gra_adjust(
    gra_initial: RiskSignal,
    cra_signal: RiskSignal,
    backend: ChatBackend,
    params: ChatParams = ChatParams(),
    retries: int = DEFAULT_RETRIES,
    key: CompanyYearKey | None = None,
) -> RiskSignal:
    """Apply the governance-recommended notch adjustment to the composite grade.

    The returned signal keeps the initial governance grade/score and adds
    adjusted_grade; adjustments are clamped to ±2 notches.
    """
    system, user = build_gra_adjust_prompt(gra_initial, cra_signal, key)
    verdict = _complete_with_retry(backend, system, user, params, retries)
    adjustment = verdict.adjustment if verdict.adjustment is not None else 0
    flags = tuple(gra_initial.flags)
    if abs(adjustment) > GRA_ADJUSTMENT_LIMIT:
        adjustment = GRA_ADJUSTMENT_LIMIT if adjustment > 0 else -GRA_ADJUSTMENT_LIMIT
        flags = flags + ("adjustment_clamped",)
    adjusted = shift_grade(cra_signal.grade, adjustment)
    return RiskSignal(
        agent_id=AgentId.GRA,
        grade=gra_initial.grade,
        score=gra_initial.score,
        rationale=(
            gra_initial.rationale
            + f" | composite adjustment {adjustment:+d} notch(es): {verdict.rationale}"
        ),
        inputs_digest=digest_of(
            {"initial": gra_initial.as_dict(), "composite": cra_signal.as_dict()}
        ),
        grade_overridden=gra_initial.grade_overridden,
        adjusted_grade=adjusted,
        flags=flags,
    )
