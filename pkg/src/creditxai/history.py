"""Historical windows and semantic-similarity weighting of prior years.

For a company-year t, the window holds up to K prior years of (item
features, financials, rating). Each prior year gets a cosine similarity
against the current filing (mean over items present in both years) and
the similarities become softmax weights. The weights are not aggregated
numerically into a rating; they order and annotate the prompt context the
history-aware agents read.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, NoCommonItems, ZeroVector
from .features import ItemFeatures
from .fra_quant import FinancialVector
from .ratings import CompanyYearKey, RatingGrade

DEFAULT_ALPHA = 5.0
DEFAULT_WINDOW_K = 3

VECTOR_CHOICES = ("finance", "general")


@dataclass(frozen=True)
class HistoryEntry:
    """One prior year of evidence for a company."""

    year: int
    item_features: Mapping[str, ItemFeatures]
    financials: FinancialVector | None
    grade: RatingGrade


@dataclass(frozen=True)
class HistoryWindow:
    """Up to K prior years, ascending, all strictly before the current year."""

    key: CompanyYearKey
    k: int
    entries: tuple[HistoryEntry, ...]

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("window length K must be >= 1")
        years = [e.year for e in self.entries]
        if any(b <= a for a, b in zip(years, years[1:])):
            raise ValueError("entries must be strictly increasing by year")
        if any(y >= self.key.fiscal_year for y in years):
            raise ValueError("window entries must predate the current year")
        if len(self.entries) > self.k:
            raise ValueError(f"window holds {len(self.entries)} entries, K={self.k}")

    @property
    def empty(self) -> bool:
        return not self.entries


@dataclass(frozen=True)
class SimilarityWeights:
    """Softmax-normalized similarity weights over the window's years."""

    alpha: float
    per_year: tuple[tuple[int, float, float], ...]  # (year, sim, weight)

    def weight_of(self, year: int) -> float:
        for y, _, w in self.per_year:
            if y == year:
                return w
        raise KeyError(year)


def build_history_window(
    records: Mapping[tuple[str, int], HistoryEntry] | Sequence[HistoryEntry],
    key: CompanyYearKey,
    k: int = DEFAULT_WINDOW_K,
) -> HistoryWindow:
    """Collect the company's years in [t-K, t-1]; gaps are data, not errors."""
    if k < 1:
        raise ValueError("window length K must be >= 1")
    if isinstance(records, Mapping):
        candidates = [
            entry
            for (company_id, _), entry in records.items()
            if company_id == key.company_id
        ]
    else:
        candidates = list(records)
    lo, hi = key.fiscal_year - k, key.fiscal_year - 1
    entries = tuple(sorted((e for e in candidates if lo <= e.year <= hi), key=lambda e: e.year))
    return HistoryWindow(key=key, k=k, entries=entries)


def item_similarity(v_cur: Sequence[float], v_hist: Sequence[float]) -> float:
    """Cosine similarity, clamped into [-1, 1] against rounding."""
    a = np.asarray(v_cur, dtype=np.float64)
    b = np.asarray(v_hist, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector widths differ: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for zero-norm vector")
    return max(-1.0, min(1.0, float(np.dot(a, b)) / (na * nb)))


@dataclass(frozen=True)
class YearSimilarity:
    value: float
    excluded_items: int  # items present in only one of the two years


def compute_year_similarity(
    current: Mapping[str, ItemFeatures],
    historical: Mapping[str, ItemFeatures],
    vector_choice: str = "finance",
) -> YearSimilarity:
    """Per-item cosines over items both years share, then the mean."""
    if vector_choice not in VECTOR_CHOICES:
        raise ValueError(f"vector_choice must be one of {VECTOR_CHOICES}")
    common = sorted(current.keys() & historical.keys())
    excluded = len(current.keys() ^ historical.keys())
    sims = {}
    for item_id in common:
        cur = current[item_id]
        hist = historical[item_id]
        v_cur = cur.finance_vec if vector_choice == "finance" else cur.general_vec
        v_hist = hist.finance_vec if vector_choice == "finance" else hist.general_vec
        sims[item_id] = item_similarity(v_cur, v_hist)
    return YearSimilarity(value=aggregate_year_similarity(sims), excluded_items=excluded)


def aggregate_year_similarity(per_item_sims: Mapping[str, float]) -> float:
    """Arithmetic mean over the items available in both years."""
    if not per_item_sims:
        raise NoCommonItems("no filing item appears in both years")
    return sum(per_item_sims.values()) / len(per_item_sims)


def softmax_weights(sims: Sequence[tuple[int, float]], alpha: float = DEFAULT_ALPHA) -> SimilarityWeights:
    """w_k = exp(alpha * sim_k) / sum_l exp(alpha * sim_l), max-subtracted for stability."""
    if not sims:
        raise ValueError("at least one similarity required")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    logits = [alpha * s for _, s in sims]
    peak = max(logits)
    exps = [math.exp(x - peak) for x in logits]
    total = sum(exps)
    per_year = tuple(
        (year, sim, e / total) for (year, sim), e in zip(sims, exps)
    )
    return SimilarityWeights(alpha=alpha, per_year=per_year)


def weights_for_window(
    window: HistoryWindow,
    current_items: Mapping[str, ItemFeatures],
    alpha: float = DEFAULT_ALPHA,
    vector_choice: str = "finance",
) -> SimilarityWeights:
    """Similarity-weight every window year against the current filing."""
    if window.empty:
        raise ValueError("cannot weight an empty window")
    sims = []
    for entry in window.entries:
        year_sim = compute_year_similarity(current_items, entry.item_features, vector_choice)
        sims.append((entry.year, year_sim.value))
    return softmax_weights(sims, alpha)


def render_history_context(
    window: HistoryWindow,
    weights: SimilarityWeights,
    vector_choice: str = "finance",
    max_indicators: int = 4,
) -> str:
    """The agent-prompt history block: years by descending weight, annotated.

    Equal weights break ties toward the later year. Deterministic for
    fixed inputs.
    """
    if window.empty:
        raise ValueError("cannot render an empty window")
    by_year = {e.year: e for e in window.entries}
    ordered = sorted(weights.per_year, key=lambda t: (-t[2], -t[0]))
    lines = [f"WEIGHTED HISTORY (similarity basis: {vector_choice}):"]
    for year, sim, weight in ordered:
        entry = by_year[year]
        summary = _financial_summary(entry.financials, max_indicators)
        lines.append(
            f"- {year}: weight {weight:.2f} (sim {sim:+.3f}), prior grade {entry.grade.value}; {summary}"
        )
    return "\n".join(lines)


def _financial_summary(fin: FinancialVector | None, max_indicators: int) -> str:
    if fin is None or not fin.indicators:
        return "no financial indicators on record"
    parts = [
        f"{name}={fin.indicators[name]:.4g}"
        for name in sorted(fin.indicators)[:max_indicators]
    ]
    return ", ".join(parts)
