"""Deterministic decision layer: composite weighting and final synthesis.

The composite rater blends business and financial scores, tilting toward
the business (text) score when the two diverge beyond a threshold. The
chief-analyst step fuses all four signals with consensus-aware outlier
damping; an optional llm mode lets a backend second-guess the
deterministic result while keeping it in the rationale for audit.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping

from .agents import ChatBackend, ChatParams, VERDICT_SCHEMA_TEXT, parse_verdict
from .errors import MissingSignal
from .ratings import (
    AgentId,
    RatingGrade,
    RiskScore,
    RiskSignal,
    digest_of,
    grade_to_score,
    score_to_grade,
)

DEFAULT_CAA_WEIGHTS: dict[str, float] = {"CRA": 0.5, "GRA": 0.3, "BRA": 0.1, "FRA": 0.1}
OUTLIER_MAD_FACTOR = 2.0


@dataclass(frozen=True)
class FusionParams:
    """Divergence threshold and composite weights."""

    delta: float = 0.15
    w_high: float = 0.7
    w_base: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1): {self.delta}")
        if not 0.5 < self.w_high <= 1:
            raise ValueError(f"w_high must be in (0.5, 1]: {self.w_high}")
        if not 0 < self.w_base < 1:
            raise ValueError(f"w_base must be in (0, 1): {self.w_base}")
        if self.w_high <= self.w_base:
            raise ValueError("w_high must exceed w_base")


@dataclass(frozen=True)
class FinalDecision:
    """The synthesized rating plus everything needed to audit it."""

    score: RiskScore
    grade: RatingGrade
    contributing: tuple[RiskSignal, ...]
    consensus: float
    rationale: str
    grade_overridden: bool = False

    def __post_init__(self):
        have = {s.agent_id for s in self.contributing}
        expected = {AgentId.BRA, AgentId.FRA, AgentId.GRA, AgentId.CRA}
        if have != expected:
            raise ValueError(f"contributing must be exactly BRA/FRA/GRA/CRA, got {sorted(a.value for a in have)}")
        if not self.grade_overridden and score_to_grade(self.score) is not self.grade:
            raise ValueError("decision grade/score mapping mismatch without override flag")

    def signal(self, agent_id: AgentId) -> RiskSignal:
        for s in self.contributing:
            if s.agent_id == agent_id:
                return s
        raise KeyError(agent_id)

    def as_dict(self) -> dict:
        return {
            "score": self.score.value,
            "grade": self.grade.value,
            "consensus": self.consensus,
            "rationale": self.rationale,
            "grade_overridden": self.grade_overridden,
            "contributing": [s.as_dict() for s in self.contributing],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FinalDecision":
        return cls(
            score=RiskScore(float(d["score"])),
            grade=RatingGrade.parse(d["grade"]),
            contributing=tuple(RiskSignal.from_dict(s) for s in d["contributing"]),
            consensus=float(d["consensus"]),
            rationale=str(d["rationale"]),
            grade_overridden=bool(d.get("grade_overridden", False)),
        )


def fuse_cra(
    s_bra: RiskScore, s_fra: RiskScore, params: FusionParams = FusionParams()
) -> tuple[RiskSignal, tuple[float, float]]:
    """Weighted blend of business and financial scores.

    The business weight jumps to w_high only when |s_bra - s_fra|
    strictly exceeds delta; at exact equality the base branch applies.
    """
    divergence = abs(s_bra.value - s_fra.value)
    diverged = divergence > params.delta
    w_bra = params.w_high if diverged else params.w_base
    w_fra = 1.0 - w_bra
    score = RiskScore(w_bra * s_bra.value + w_fra * s_fra.value)
    branch = "divergent" if diverged else "aligned"
    rationale = (
        f"|dS| = {divergence:.4f} vs delta {params.delta:.4f} ({branch}); "
        f"w_bra={w_bra:.2f}, w_fra={w_fra:.2f}; "
        f"score = {w_bra:.2f}*{s_bra.value:.4f} + {w_fra:.2f}*{s_fra.value:.4f} = {score.value:.4f}"
    )
    signal = RiskSignal(
        agent_id=AgentId.CRA,
        grade=score_to_grade(score),
        score=score,
        rationale=rationale,
        inputs_digest=digest_of(
            {"s_bra": s_bra.value, "s_fra": s_fra.value, "delta": params.delta,
             "w_high": params.w_high, "w_base": params.w_base}
        ),
    )
    return signal, (w_bra, w_fra)


def _fused_score(signals: Mapping[AgentId, RiskSignal], weights_cfg: Mapping[str, float]) -> tuple[float, float, dict[str, float], list[str]]:
    """Deterministic chief-analyst arithmetic: (score, consensus, weights, outliers)."""
    gra = signals[AgentId.GRA]
    scores = {
        AgentId.BRA: signals[AgentId.BRA].score.value,
        AgentId.FRA: signals[AgentId.FRA].score.value,
        # governance enters through its composite-adjusted grade once one exists
        AgentId.GRA: (
            grade_to_score(gra.adjusted_grade).value
            if gra.adjusted_grade is not None
            else gra.score.value
        ),
        AgentId.CRA: signals[AgentId.CRA].score.value,
    }
    values = list(scores.values())
    consensus = max(0.0, min(1.0, 1.0 - statistics.pstdev(values) / 0.5))
    median = statistics.median(values)
    mad = sum(abs(v - median) for v in values) / len(values)
    weights = {a: float(weights_cfg.get(a.value, DEFAULT_CAA_WEIGHTS[a.value])) for a in scores}
    outliers = []
    for agent, value in scores.items():
        if abs(value - median) > OUTLIER_MAD_FACTOR * mad:
            weights[agent] *= 0.5
            outliers.append(agent.value)
    total = sum(weights.values())
    weights = {a: w / total for a, w in weights.items()}
    fused = sum(weights[a] * scores[a] for a in scores)
    return fused, consensus, {a.value: w for a, w in weights.items()}, outliers


def decide_caa(
    signals: Mapping[AgentId, RiskSignal],
    mode: str = "deterministic",
    backend: ChatBackend | None = None,
    weights_cfg: Mapping[str, float] | None = None,
    params: ChatParams = ChatParams(),
) -> FinalDecision:
    """Synthesize the final rating from the four analytical signals.

    deterministic mode is pure arithmetic: support-weighted scores with
    outlier damping (weights halved beyond 2x the mean absolute deviation
    from the median, then renormalized). llm mode renders the signals and
    the deterministic result into a prompt and lets the backend decide;
    the deterministic numbers stay in the rationale for audit.
    """
    required = (AgentId.BRA, AgentId.FRA, AgentId.GRA, AgentId.CRA)
    for agent in required:
        if agent not in signals:
            raise MissingSignal(agent.value)
    weights_cfg = weights_cfg or DEFAULT_CAA_WEIGHTS
    fused, consensus, weights, outliers = _fused_score(signals, weights_cfg)
    contributing = tuple(signals[a] for a in required)
    gra_signal = signals[AgentId.GRA]
    gra_score = (
        grade_to_score(gra_signal.adjusted_grade).value
        if gra_signal.adjusted_grade is not None
        else gra_signal.score.value
    )
    det_rationale = (
        f"weighted fusion {weights} over scores "
        f"[BRA {signals[AgentId.BRA].score.value:.4f}, FRA {signals[AgentId.FRA].score.value:.4f}, "
        f"GRA(adj) {gra_score:.4f}, "
        f"CRA {signals[AgentId.CRA].score.value:.4f}]"
        + (f"; outlier weight halved: {outliers}" if outliers else "")
        + f"; consensus {consensus:.4f}"
    )
    if mode == "deterministic":
        score = RiskScore(fused)
        return FinalDecision(
            score=score,
            grade=score_to_grade(score),
            contributing=contributing,
            consensus=consensus,
            rationale=det_rationale,
        )
    if mode != "llm":
        raise ValueError(f"unknown decision mode: {mode!r}")
    if backend is None:
        raise ValueError("llm mode requires a backend")
    system = (
        "You are the chief credit analyst. Weigh the four committee signals for "
        "consistency and reliability and issue the final rating. " + VERDICT_SCHEMA_TEXT
    )
    signal_lines = [
        f"- {s.agent_id.value}: grade {s.effective_grade().value}, score {s.score.value:.4f}; {s.rationale}"
        for s in contributing
    ]
    user = "\n".join(
        [
            "AGENT: CAA",
            "COMMITTEE SIGNALS:",
            *signal_lines,
            f"DETERMINISTIC SYNTHESIS: score {fused:.4f} -> {score_to_grade(RiskScore(fused)).value}; {det_rationale}",
            "Respond with the JSON verdict now.",
        ]
    )
    verdict = parse_verdict(backend.complete(system, user, params))
    return FinalDecision(
        score=verdict.score,
        grade=verdict.grade,
        contributing=contributing,
        consensus=consensus,
        rationale=f"{verdict.rationale} [deterministic audit: {det_rationale}]",
        grade_overridden=verdict.overridden,
    )
