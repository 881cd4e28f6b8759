"""Multi-agent corporate credit rating pipeline.

Layers: filing ingestion and hybrid features (data processing), the
BRA/FRA/GRA/CRA analytical agents over a pluggable chat backend
(analysis), deterministic CAA fusion plus report rendering (decision),
an append-only stage trace (supervision), and an evaluation/ablation
harness.
"""

from .ratings import (
    AgentId,
    CompanyYearKey,
    RatingGrade,
    RiskScore,
    RiskSignal,
    grade_to_score,
    roundtrip_check,
    score_to_grade,
    shift_grade,
)

__all__ = [
    "AgentId",
    "CompanyYearKey",
    "RatingGrade",
    "RiskScore",
    "RiskSignal",
    "grade_to_score",
    "roundtrip_check",
    "score_to_grade",
    "shift_grade",
]

__version__ = "0.1.0"
