"""10-K text parsing: split a filing into per-item sections.

Headers are matched case-insensitively against ``Item <number><letter?>``
followed by separator punctuation. When the same item id occurs more than
once (table of contents plus body), the occurrence with the longest
following body wins. Bodies shorter than `min_body_chars` are kept but
flagged as stubs.
"""
from __future__ import annotations

import html
import re
from dataclasses import dataclass

from .errors import AllItemsMissing, NoItemsFound
from .ratings import CompanyYearKey

# 14-item default; treated as data, overridable in config.
DEFAULT_KEY_ITEMS: frozenset[str] = frozenset(
    {"1", "1A", "1B", "2", "3", "4", "5", "7", "7A", "8", "9A", "10", "11", "13"}
)

DEFAULT_MIN_BODY_CHARS = 200

_HEADER_RE = re.compile(r"\bitem\s+(\d{1,2})\s*([a-z])?\s*[.:;–—-]", re.IGNORECASE)

_TAG_BREAK_RE = re.compile(r"</\s*(?:p|div|tr|li|h[1-6]|table)\s*>|<\s*br\s*/?\s*>", re.IGNORECASE)
_TAG_RE = re.compile(r"<[^>]+>")
_PARA_SPLIT_RE = re.compile(r"\n\s*\n")


@dataclass(frozen=True)
class FilingDocument:
    key: CompanyYearKey
    source_uri: str
    raw_text: str

    def __post_init__(self):
        if not self.raw_text:
            raise ValueError("raw_text must be non-empty")


@dataclass(frozen=True)
class FilingItem:
    """One extracted item section; span offsets index into the source raw_text."""

    item_id: str
    title: str
    body: str
    char_span: tuple[int, int]
    stub: bool = False


def strip_markup(raw: str) -> str:
    """Drop tags/entities and normalize whitespace.

    Whitespace runs collapse to single spaces; paragraph breaks (blank
    lines or block-level tags) survive as newline pairs. Idempotent on
    its own output.
    """
    if not raw:
        return ""
    text = _TAG_BREAK_RE.sub("\n\n", raw)
    text = _TAG_RE.sub(" ", text)
    text = html.unescape(text)
    text = text.replace("\xa0", " ").replace("\r\n", "\n").replace("\r", "\n")
    paragraphs = []
    for para in _PARA_SPLIT_RE.split(text):
        collapsed = " ".join(para.split())
        if collapsed:
            paragraphs.append(collapsed)
    return "\n\n".join(paragraphs)


def parse_filing(doc: FilingDocument, min_body_chars: int = DEFAULT_MIN_BODY_CHARS) -> list[FilingItem]:
    """Extract item sections from a filing, in document order.

    Raises NoItemsFound when no header matches at all.
    """
    matches = list(_HEADER_RE.finditer(doc.raw_text))
    if not matches:
        raise NoItemsFound(f"no item headers in {doc.key}")

    text_len = len(doc.raw_text)
    # Each occurrence's body runs from the end of its header to the start
    # of the next header of any item, so candidate bodies never overlap.
    occurrences: dict[str, list[tuple[int, int, int]]] = {}
    for i, m in enumerate(matches):
        number, letter = m.group(1), m.group(2)
        item_id = number + (letter.upper() if letter else "")
        body_start = m.end()
        body_end = matches[i + 1].start() if i + 1 < len(matches) else text_len
        occurrences.setdefault(item_id, []).append((m.start(), body_start, body_end))

    chosen: list[FilingItem] = []
    for item_id, occs in occurrences.items():
        # Longest following body wins; earliest occurrence breaks ties.
        header_start, body_start, body_end = max(
            occs, key=lambda occ: (occ[2] - occ[1], -occ[0])
        )
        start, end = _trimmed_span(doc.raw_text, body_start, body_end)
        body = doc.raw_text[start:end]
        title = _title_of(doc.raw_text, body_start)
        chosen.append(
            FilingItem(
                item_id=item_id,
                title=title,
                body=body,
                char_span=(start, end),
                stub=len(body) < min_body_chars,
            )
        )
    chosen.sort(key=lambda it: it.char_span[0])
    return chosen


def select_key_items(
    items: list[FilingItem], wanted: frozenset[str] | set[str]
) -> tuple[dict[str, FilingItem], frozenset[str]]:
    """Keep only wanted items; report missing ids instead of dropping them silently.

    Returns (selected map, missing ids). Raises AllItemsMissing when the
    intersection is empty.
    """
    if not wanted:
        raise ValueError("wanted item set must be non-empty")
    selected: dict[str, FilingItem] = {}
    for item in items:
        if item.item_id in wanted and item.item_id not in selected:
            selected[item.item_id] = item
    missing = frozenset(wanted) - selected.keys()
    if not selected:
        raise AllItemsMissing(f"none of {sorted(wanted)} present")
    return selected, missing


def _trimmed_span(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def _title_of(text: str, body_start: int) -> str:
    line_end = text.find("\n", body_start)
    if line_end == -1:
        line_end = len(text)
    return text[body_start:line_end].strip(" .\t")[:120]
