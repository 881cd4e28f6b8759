"""Quantitative core of the financial risk agent.

Industry baselines are per-sector medians of each indicator over the
historical dataset; a company's indicator deviation is its relative gap
from the baseline. Deviations plus year-over-year moves feed a
deterministic vote-and-clamp rule that proposes a notch adjustment to
the prior rating. Every constant lives in AdjustmentPolicy; the rule is
an explicit, testable stand-in for analyst threshold judgment.
"""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyReport, UnknownSector
from .ratings import CompanyYearKey, RatingGrade, digest_of, shift_grade

DEFAULT_MIN_SUPPORT = 5
BASELINE_EPS = 1e-9
GLOBAL_SECTOR = "__all__"


@dataclass(frozen=True)
class FinancialVector:
    """One company-year's indicator values."""

    key: CompanyYearKey
    indicators: Mapping[str, float]

    def __post_init__(self):
        for name, value in self.indicators.items():
            if not math.isfinite(value):
                raise ValueError(f"indicator {name} is not finite: {value}")
        object.__setattr__(self, "indicators", dict(self.indicators))


@dataclass(frozen=True)
class IndustryBaselines:
    """sector -> indicator -> median, plus a cross-sector fallback row.

    Cells with fewer than min_support observations are absent, never
    zero-filled. Provenance records the dataset digest and period range.
    """

    per_sector: Mapping[str, Mapping[str, float]]
    min_support: int
    dataset_digest: str
    period_range: tuple[int, int]

    def lookup(self, sector: str, indicator: str) -> float | None:
        """Sector cell, else the all-sector fallback, else None."""
        cell = self.per_sector.get(sector, {}).get(indicator)
        if cell is not None:
            return cell
        return self.per_sector.get(GLOBAL_SECTOR, {}).get(indicator)

    def has_sector(self, sector: str) -> bool:
        return sector in self.per_sector

    def as_dict(self) -> dict:
        return {
            "per_sector": {s: dict(m) for s, m in sorted(self.per_sector.items())},
            "min_support": self.min_support,
            "dataset_digest": self.dataset_digest,
            "period_range": list(self.period_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IndustryBaselines":
        return cls(
            per_sector={s: dict(m) for s, m in d["per_sector"].items()},
            min_support=int(d["min_support"]),
            dataset_digest=str(d["dataset_digest"]),
            period_range=(int(d["period_range"][0]), int(d["period_range"][1])),
        )


DEV_STATUS_OK = "ok"
DEV_STATUS_UNDEFINED_BASELINE = "undefined_baseline"
DEV_STATUS_MISSING = "missing_indicator"


@dataclass(frozen=True)
class IndicatorDeviation:
    indicator: str
    value: float | None
    baseline: float | None
    dev: float | None
    status: str


@dataclass(frozen=True)
class DeviationReport:
    """Per-indicator deviations for one company-year, plus YoY moves."""

    key: CompanyYearKey
    entries: tuple[IndicatorDeviation, ...]
    yoy: Mapping[str, float]

    def entry(self, indicator: str) -> IndicatorDeviation:
        for e in self.entries:
            if e.indicator == indicator:
                return e
        raise KeyError(indicator)

    def ok_entries(self) -> list[IndicatorDeviation]:
        return [e for e in self.entries if e.status == DEV_STATUS_OK]


@dataclass(frozen=True)
class AdjustmentPolicy:
    """Thresholds and directionality for the notch-vote rule.

    directionality maps indicator -> True when higher values are better.
    Indicators absent from the map default to higher-is-better.
    """

    dev_minor: float = 0.25
    dev_major: float = 0.75
    yoy_major: float = 0.40
    max_notches: int = 2
    directionality: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.dev_minor < self.dev_major:
            raise ValueError("require 0 < dev_minor < dev_major")
        if self.max_notches < 1:
            raise ValueError("max_notches must be >= 1")
        object.__setattr__(self, "directionality", dict(self.directionality))

    def higher_is_better(self, indicator: str) -> bool:
        return self.directionality.get(indicator, True)


def compute_baselines(
    dataset: Sequence[FinancialVector],
    sectors: Iterable[str] | None = None,
    min_support: int = DEFAULT_MIN_SUPPORT,
) -> IndustryBaselines:
    """Per-sector medians over all companies and periods in the dataset.

    Even-count cells take the mean of the two middle values. The caller
    is responsible for passing only the periods baselines may legally
    see (the harness passes the reference split).
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    wanted = set(sectors) if sectors is not None else None
    cells: dict[str, dict[str, list[float]]] = {}
    years = []
    for fin in dataset:
        years.append(fin.key.fiscal_year)
        sector = fin.key.sector
        if wanted is not None and sector not in wanted:
            continue
        for scope in (sector, GLOBAL_SECTOR):
            per_indicator = cells.setdefault(scope, {})
            for name, value in fin.indicators.items():
                per_indicator.setdefault(name, []).append(value)
    per_sector: dict[str, dict[str, float]] = {}
    for sector, per_indicator in cells.items():
        medians = {
            name: statistics.median(values)
            for name, values in per_indicator.items()
            if len(values) >= min_support
        }
        if medians:
            per_sector[sector] = medians
    digest = digest_of(
        sorted(
            (fin.key.company_id, fin.key.fiscal_year, fin.key.sector, sorted(fin.indicators.items()))
            for fin in dataset
        )
    )
    return IndustryBaselines(
        per_sector=per_sector,
        min_support=min_support,
        dataset_digest=digest,
        period_range=(min(years), max(years)),
    )


def compute_deviations(
    fin: FinancialVector,
    prior: FinancialVector | None,
    baselines: IndustryBaselines,
    schema: Sequence[str] | None = None,
    eps: float = BASELINE_EPS,
) -> DeviationReport:
    """dev = (value - baseline) / baseline, guarded against near-zero baselines.

    The report covers the full indicator schema; indicators without a
    value or a baseline carry status 'missing_indicator', near-zero
    baselines carry 'undefined_baseline' instead of a division.
    """
    if not baselines.has_sector(fin.key.sector):
        raise UnknownSector(f"sector {fin.key.sector!r} absent from baselines")
    names = list(schema) if schema is not None else sorted(fin.indicators)
    entries = []
    for name in names:
        value = fin.indicators.get(name)
        baseline = baselines.lookup(fin.key.sector, name)
        if value is None or baseline is None:
            entries.append(IndicatorDeviation(name, value, baseline, None, DEV_STATUS_MISSING))
        elif abs(baseline) < eps:
            entries.append(
                IndicatorDeviation(name, value, baseline, None, DEV_STATUS_UNDEFINED_BASELINE)
            )
        else:
            dev = (value - baseline) / baseline
            entries.append(IndicatorDeviation(name, value, baseline, dev, DEV_STATUS_OK))
    yoy: dict[str, float] = {}
    if prior is not None:
        for name in names:
            cur, prev = fin.indicators.get(name), prior.indicators.get(name)
            if cur is not None and prev is not None and abs(prev) >= eps:
                yoy[name] = (cur - prev) / abs(prev)
    return DeviationReport(key=fin.key, entries=tuple(entries), yoy=yoy)


def _round_half_away(x: float) -> int:
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


def propose_rating_adjustment(
    prev_grade: RatingGrade,
    report: DeviationReport,
    policy: AdjustmentPolicy,
) -> tuple[int, str]:
    """Deterministic notch proposal from deviation and momentum votes.

    Each ok-status indicator votes -1/0/+1 by the minor-dev threshold,
    oriented by directionality (positive vote = upgrade); a major-tier
    deviation breach or a co-signed major YoY breach doubles the vote.
    notch_delta = clamp(round(mean vote * 2)), rounded half away from
    zero, clamped to max_notches and then to the grade scale. Positive
    delta is an upgrade (grade index decreases).
    """
    ok = report.ok_entries()
    if not ok:
        raise EmptyReport(f"no usable indicator for {report.key}")
    votes: list[float] = []
    reasons: list[str] = []
    for entry in ok:
        sign = 1.0 if policy.higher_is_better(entry.indicator) else -1.0
        oriented = sign * entry.dev  # positive = better than baseline
        if abs(oriented) < policy.dev_minor:
            votes.append(0.0)
            continue
        vote = 1.0 if oriented > 0 else -1.0
        weight = 1.0
        trigger = f"dev {entry.dev:+.3f} breaches minor ±{policy.dev_minor}"
        if abs(oriented) >= policy.dev_major:
            weight = 2.0
            trigger = f"dev {entry.dev:+.3f} breaches major ±{policy.dev_major}"
        else:
            yoy = report.yoy.get(entry.indicator)
            if yoy is not None:
                oriented_yoy = sign * yoy
                if abs(oriented_yoy) >= policy.yoy_major and (oriented_yoy > 0) == (vote > 0):
                    weight = 2.0
                    trigger += f"; yoy {yoy:+.3f} breaches ±{policy.yoy_major} (doubled)"
        votes.append(vote * weight)
        direction = "upgrade" if vote > 0 else "downgrade"
        reasons.append(f"{entry.indicator}: {direction} vote {vote * weight:+.0f} ({trigger})")
    mean_vote = sum(votes) / len(votes)
    delta = _round_half_away(mean_vote * 2)
    delta = max(-policy.max_notches, min(policy.max_notches, delta))
    # Keep the resulting grade on the scale.
    delta = min(delta, prev_grade.index)
    delta = max(delta, prev_grade.index - 7)
    if not reasons:
        rationale = "all indicators within thresholds; no adjustment"
    else:
        rationale = f"mean vote {mean_vote:+.3f} over {len(votes)} indicators; " + "; ".join(reasons)
    return delta, rationale


def apply_adjustment(prev_grade: RatingGrade, notch_delta: int) -> RatingGrade:
    return shift_grade(prev_grade, notch_delta)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def load_financials_csv(path: str | Path) -> list[FinancialVector]:
    """Read `company_id,fiscal_year,sector,<indicator...>`; blank cells are missing."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"company_id", "fiscal_year", "sector"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"financials CSV must carry columns {sorted(required)}")
        indicator_cols = [c for c in reader.fieldnames if c not in required]
        for lineno, row in enumerate(reader, start=2):
            key = CompanyYearKey(row["company_id"], int(row["fiscal_year"]), row["sector"])
            indicators = {}
            for col in indicator_cols:
                cell = (row.get(col) or "").strip()
                if not cell:
                    continue
                try:
                    indicators[col] = float(cell)
                except ValueError:
                    raise ValueError(f"line {lineno}: non-numeric {col}={cell!r}") from None
            rows.append(FinancialVector(key=key, indicators=indicators))
    return rows


def save_baselines(baselines: IndustryBaselines, path: str | Path) -> None:
    Path(path).write_text(json.dumps(baselines.as_dict(), indent=2, sort_keys=True) + "\n")


def load_baselines(path: str | Path) -> IndustryBaselines:
    return IndustryBaselines.from_dict(json.loads(Path(path).read_text()))
