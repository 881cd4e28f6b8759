"""One-shot fixture exporter: items JSONL in, feature-store JSONL out.

The output schema matches the primary pipeline's feature store record for
record (company_id, fiscal_year, sector, item_id, finance_vec,
general_vec, sentiment, provider_id, content_digest), with floats at
9 significant digits and sorted keys so re-exports are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .bundles import FeatureBundle


class ExportFailure(Exception):
    """Input unreadable or output unwritable."""


def _q9(x: float) -> float:
    return float(f"{x:.9g}")


def export_fixtures(items_file: str | Path, out_file: str | Path, bundle: FeatureBundle) -> int:
    """Write one feature record per non-stub item; returns the record count."""
    items_path = Path(items_file)
    if not items_path.is_file():
        raise ExportFailure(f"items file not found: {items_path}")
    try:
        lines = items_path.read_text().splitlines()
    except OSError as exc:
        raise ExportFailure(f"cannot read {items_path}: {exc}") from exc

    records = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            item = json.loads(line)
            company = str(item["company_id"])
            year = int(item["fiscal_year"])
            sector = str(item["sector"])
            item_id = str(item["item_id"])
            body = str(item["body"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ExportFailure(f"items line {lineno}: {exc}") from exc
        if item.get("stub") or not body:
            continue
        finance = bundle.embed_finance([body])[0]
        general = bundle.embed_general([body])[0]
        score = bundle.sentiment([body])[0]
        records.append(
            {
                "company_id": company,
                "fiscal_year": year,
                "sector": sector,
                "item_id": item_id,
                "finance_vec": [_q9(x) for x in finance],
                "general_vec": [_q9(x) for x in general],
                "sentiment": _q9(max(-1.0, min(1.0, float(score)))),
                "provider_id": bundle.provider_id,
                "content_digest": hashlib.sha256(body.encode("utf-8")).hexdigest(),
            }
        )
    records.sort(key=lambda r: (r["company_id"], r["fiscal_year"], r["item_id"]))
    payload = "".join(
        json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records
    )
    try:
        Path(out_file).write_text(payload)
    except OSError as exc:
        raise ExportFailure(f"cannot write {out_file}: {exc}") from exc
    return len(records)
