"""Rating report rendering and atomic file output.

Each report exists twice: a human-readable markdown body with fixed
section order (Final, Composite, Business, Financial, Governance,
History appendix) and a JSON sidecar carrying every number at full
precision. Displayed scores round to 4 decimals and weights to 2; the
generation timestamp is isolated to a single line so golden-file tests
can mask it.
"""
from __future__ import annotations

import datetime as _dt
import json
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import IoFailure
from .fusion import FinalDecision
from .history import SimilarityWeights
from .ratings import AgentId, CompanyYearKey, digest_of, grade_to_score

TIMESTAMP_RE = re.compile(r"^_Generated: .*_$", re.MULTILINE)

_SECTION_ORDER = (
    ("Composite", AgentId.CRA),
    ("Business", AgentId.BRA),
    ("Financial", AgentId.FRA),
    ("Governance", AgentId.GRA),
)


@dataclass(frozen=True)
class RatingReport:
    key: CompanyYearKey
    final: FinalDecision
    history_weights: SimilarityWeights | None
    config_fingerprint: str
    generated_at: str

    def to_json_dict(self) -> dict:
        return {
            "key": self.key.as_dict(),
            "final": self.final.as_dict(),
            "history": (
                {
                    "alpha": self.history_weights.alpha,
                    "per_year": [
                        {"year": y, "sim": s, "weight": w}
                        for y, s, w in self.history_weights.per_year
                    ],
                }
                if self.history_weights is not None
                else None
            ),
            "config_fingerprint": self.config_fingerprint,
            "generated_at": self.generated_at,
        }

    def to_markdown(self) -> str:
        lines = [
            f"# Credit rating report: {self.key.company_id} FY{self.key.fiscal_year}",
            f"_Generated: {self.generated_at}_",
            "",
            f"Sector: {self.key.sector} | Config fingerprint: `{self.config_fingerprint[:16]}`",
            "",
            "## Final rating",
            f"- Grade: **{self.final.grade.value}**",
            f"- Risk score: {self.final.score.value:.4f}",
            f"- Consensus: {self.final.consensus:.4f}",
            f"- Rationale: {self.final.rationale}",
        ]
        for heading, agent_id in _SECTION_ORDER:
            signal = self.final.signal(agent_id)
            lines += [
                "",
                f"## {heading} ({agent_id.value})",
                f"- Grade: {signal.grade.value}"
                + (
                    f" (adjusted: {signal.adjusted_grade.value}, score {grade_to_score(signal.adjusted_grade).value:.4f})"
                    if signal.adjusted_grade is not None
                    else ""
                ),
                f"- Score: {signal.score.value:.4f}",
                f"- Rationale: {signal.rationale}",
            ]
            if signal.flags:
                lines.append(f"- Flags: {', '.join(signal.flags)}")
        lines += ["", "## History appendix"]
        if self.history_weights is None or not self.history_weights.per_year:
            lines.append("no prior years")
        else:
            ordered = sorted(self.history_weights.per_year, key=lambda t: (-t[2], -t[0]))
            for year, sim, weight in ordered:
                lines.append(f"- {year}: weight {weight:.2f}, similarity {sim:.4f}")
        return "\n".join(lines) + "\n"


def render_report(
    decision: FinalDecision,
    key: CompanyYearKey,
    history_weights: SimilarityWeights | None,
    config: Mapping,
    generated_at: str | None = None,
) -> RatingReport:
    """Assemble the report; deterministic apart from the timestamp line."""
    return RatingReport(
        key=key,
        final=decision,
        history_weights=history_weights,
        config_fingerprint=config_fingerprint(config),
        generated_at=generated_at or _dt.datetime.now(_dt.timezone.utc).isoformat(),
    )


def config_fingerprint(config: Mapping) -> str:
    return digest_of(dict(config))


def report_from_json_dict(d: Mapping, generated_at: str | None = None) -> RatingReport:
    """Rebuild a report from its JSON sidecar (or a compatible decision bundle)."""
    history = d.get("history")
    weights = None
    if history:
        weights = SimilarityWeights(
            alpha=float(history.get("alpha", 0.0)),
            per_year=tuple(
                (int(e["year"]), float(e["sim"]), float(e["weight"]))
                for e in history["per_year"]
            ),
        )
    return RatingReport(
        key=CompanyYearKey.from_dict(d["key"]),
        final=FinalDecision.from_dict(d["final"]),
        history_weights=weights,
        config_fingerprint=str(d["config_fingerprint"]),
        generated_at=generated_at or _dt.datetime.now(_dt.timezone.utc).isoformat(),
    )


def mask_timestamp(markdown: str) -> str:
    """Neutralize the one timestamp line for golden-file comparison."""
    return TIMESTAMP_RE.sub("_Generated: MASKED_", markdown)


def write_report(report: RatingReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write `<company>_<year>.md` and `.json`, atomically (write-temp-rename)."""
    out = Path(out_dir)
    stem = f"{report.key.company_id}_{report.key.fiscal_year}"
    md_path = out / f"{stem}.md"
    json_path = out / f"{stem}.json"
    try:
        _atomic_write(md_path, report.to_markdown())
        _atomic_write(
            json_path,
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        )
    except OSError as exc:
        raise IoFailure(f"cannot write report under {out}: {exc}") from exc
    return md_path, json_path


def _atomic_write(path: Path, content: str) -> None:
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp_name, path)
    except OSError:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
