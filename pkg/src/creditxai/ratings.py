"""Rating scale, rating/score mapping, and the shared signal types.

The 8-grade ordinal scale runs AAA (index 0, lowest risk) to C (index 7,
highest risk). The continuous risk score lives in [0, 1] with higher =
riskier; grades map onto equal-width bins with midpoint encoding, so the
mapping is a bijection on grades and an exhaustive partition of [0, 1].
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class RatingGrade(str, Enum):
    AAA = "AAA"
    AA = "AA"
    A = "A"
    BBB = "BBB"
    BB = "BB"
    B = "B"
    CCC = "CCC"
    C = "C"

    @property
    def index(self) -> int:
        """Ordinal position: 0 (AAA, least risky) .. 7 (C, most risky)."""
        return _GRADE_INDEX[self]

    @classmethod
    def from_index(cls, index: int) -> "RatingGrade":
        if not 0 <= index <= 7:
            raise ValueError(f"grade index out of range: {index}")
        return _GRADE_ORDER[index]

    @classmethod
    def parse(cls, text: str) -> "RatingGrade":
        """Case-insensitive parse; rejects anything outside the 8 symbols."""
        symbol = text.strip().upper()
        try:
            return cls(symbol)
        except ValueError:
            raise ValueError(f"unknown rating grade: {text!r}") from None

    def __lt__(self, other: "RatingGrade") -> bool:  # type: ignore[override]
        if not isinstance(other, RatingGrade):
            return NotImplemented
        return self.index < other.index


_GRADE_ORDER: tuple[RatingGrade, ...] = tuple(RatingGrade)
_GRADE_INDEX: dict[RatingGrade, int] = {g: i for i, g in enumerate(_GRADE_ORDER)}

N_GRADES = len(_GRADE_ORDER)


class AgentId(str, Enum):
    BRA = "BRA"   # business risk
    FRA = "FRA"   # financial risk
    GRA = "GRA"   # governance risk
    CRA = "CRA"   # composite rating
    CAA = "CAA"   # chief analyst


@dataclass(frozen=True)
class RiskScore:
    """Continuous risk in [0, 1]; higher = riskier. Out-of-range rejected."""

    value: float

    def __post_init__(self):
        if not isinstance(self.value, (int, float)):
            raise ValueError(f"risk score must be numeric, got {type(self.value).__name__}")
        v = float(self.value)
        if not (0.0 <= v <= 1.0) or v != v:
            raise ValueError(f"risk score outside [0, 1]: {self.value}")
        object.__setattr__(self, "value", v)


def grade_to_score(grade: RatingGrade) -> RiskScore:
    """Midpoint of the grade's score bin: (index + 0.5) / 8."""
    return RiskScore((grade.index + 0.5) / N_GRADES)


def score_to_grade(score: RiskScore) -> RatingGrade:
    """Bin lookup: index = floor(score * 8), clamped to 7 at score = 1.0."""
    index = min(int(score.value * N_GRADES), N_GRADES - 1)
    return RatingGrade.from_index(index)


def roundtrip_check(grade: RatingGrade) -> RatingGrade:
    """Map a grade to its score and back; identity for all 8 grades."""
    return score_to_grade(grade_to_score(grade))


def shift_grade(grade: RatingGrade, notches: int) -> RatingGrade:
    """Move `notches` steps, positive = upgrade (index decreases), clamped to the scale."""
    index = min(max(grade.index - notches, 0), N_GRADES - 1)
    return RatingGrade.from_index(index)


@dataclass(frozen=True)
class CompanyYearKey:
    """Identity of one company-year observation."""

    company_id: str
    fiscal_year: int
    sector: str

    def __post_init__(self):
        if not self.company_id:
            raise ValueError("company_id must be non-empty")
        if not 1990 <= self.fiscal_year <= 2100:
            raise ValueError(f"fiscal_year outside [1990, 2100]: {self.fiscal_year}")
        if not self.sector:
            raise ValueError("sector must be non-empty")

    def as_dict(self) -> dict[str, Any]:
        return {
            "company_id": self.company_id,
            "fiscal_year": self.fiscal_year,
            "sector": self.sector,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CompanyYearKey":
        return cls(str(d["company_id"]), int(d["fiscal_year"]), str(d["sector"]))

    def __str__(self) -> str:
        return f"{self.company_id}/{self.fiscal_year}"


@dataclass(frozen=True)
class RiskSignal:
    """One agent's output: grade, score, rationale, and input provenance.

    grade and score must be mapping-consistent unless `grade_overridden`
    is set (an LLM agent may legitimately report a grade whose mapped
    score it also reports). `adjusted_grade` is populated only on the
    governance signal after the composite-feedback adjustment step.
    """

    agent_id: AgentId
    grade: RatingGrade
    score: RiskScore
    rationale: str
    inputs_digest: str
    grade_overridden: bool = False
    adjusted_grade: RatingGrade | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.grade_overridden and score_to_grade(self.score) is not self.grade:
            raise ValueError(
                f"inconsistent signal: score {self.score.value} maps to "
                f"{score_to_grade(self.score).value}, not {self.grade.value} "
                "(set grade_overridden to keep both)"
            )

    def effective_grade(self) -> RatingGrade:
        """The grade downstream fusion should consume (adjusted when present)."""
        return self.adjusted_grade if self.adjusted_grade is not None else self.grade

    def as_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "agent_id": self.agent_id.value,
            "grade": self.grade.value,
            "score": self.score.value,
            "rationale": self.rationale,
            "inputs_digest": self.inputs_digest,
            "grade_overridden": self.grade_overridden,
            "flags": list(self.flags),
        }
        if self.adjusted_grade is not None:
            d["adjusted_grade"] = self.adjusted_grade.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RiskSignal":
        return cls(
            agent_id=AgentId(d["agent_id"]),
            grade=RatingGrade.parse(d["grade"]),
            score=RiskScore(float(d["score"])),
            rationale=str(d.get("rationale", "")),
            inputs_digest=str(d.get("inputs_digest", "")),
            grade_overridden=bool(d.get("grade_overridden", False)),
            adjusted_grade=(
                RatingGrade.parse(d["adjusted_grade"]) if d.get("adjusted_grade") else None
            ),
            flags=tuple(d.get("flags", ())),
        )


def digest_of(payload: Any) -> str:
    """sha256 of a canonical JSON rendering; the pipeline-wide digest helper."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
