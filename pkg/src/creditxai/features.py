"""Hybrid per-item semantic features and their cache.

Each filing item gets a finance-domain vector, a general-purpose vector,
and a sentiment scalar in [-1, 1]. Providers are pluggable: an HTTP
sidecar, a recorded-fixture replay, or the deterministic token-hash
featurizer used for offline test corpora. Text longer than one provider
window is chunked; chunk vectors are mean-pooled and re-normalized to
unit length (downstream use is cosine similarity, so only direction
matters).

Store values are quantized to 9 significant digits on insert so that the
JSONL round-trip is exactly lossless.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

from .errors import CorruptRecord, DimensionMismatch, ProviderUnavailable
from .filings import FilingItem
from .ratings import CompanyYearKey

DEFAULT_FINANCE_DIM = 768
DEFAULT_GENERAL_DIM = 384
DEFAULT_CHUNK_CHARS = 4000


@dataclass(frozen=True)
class ItemFeatures:
    """Hybrid representation of one filing item."""

    finance_vec: tuple[float, ...]
    general_vec: tuple[float, ...]
    sentiment: float

    def __post_init__(self):
        for name, vec in (("finance_vec", self.finance_vec), ("general_vec", self.general_vec)):
            if not vec:
                raise ValueError(f"{name} must be non-empty")
            if any(not math.isfinite(x) for x in vec):
                raise ValueError(f"{name} contains non-finite components")
        if not math.isfinite(self.sentiment) or not -1.0 <= self.sentiment <= 1.0:
            raise ValueError(f"sentiment outside [-1, 1]: {self.sentiment}")

    @property
    def dims(self) -> tuple[int, int]:
        return (len(self.finance_vec), len(self.general_vec))


@dataclass(frozen=True)
class FeatureRecord:
    """Cache entry: features plus the identity of the body they came from."""

    key: CompanyYearKey
    item_id: str
    features: ItemFeatures
    provider_id: str
    content_digest: str

    def as_dict(self) -> dict:
        return {
            **self.key.as_dict(),
            "item_id": self.item_id,
            "finance_vec": list(self.features.finance_vec),
            "general_vec": list(self.features.general_vec),
            "sentiment": self.features.sentiment,
            "provider_id": self.provider_id,
            "content_digest": self.content_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureRecord":
        return cls(
            key=CompanyYearKey.from_dict(d),
            item_id=str(d["item_id"]),
            features=ItemFeatures(
                finance_vec=tuple(float(x) for x in d["finance_vec"]),
                general_vec=tuple(float(x) for x in d["general_vec"]),
                sentiment=float(d["sentiment"]),
            ),
            provider_id=str(d["provider_id"]),
            content_digest=str(d["content_digest"]),
        )


class FeatureProvider(Protocol):
    """Computation source for the three feature components.

    Implementations must be deterministic for identical input text and
    must preserve batch order.
    """

    provider_id: str

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]: ...

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]: ...

    def sentiment(self, texts: Sequence[str]) -> list[float]: ...


def content_digest(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def _chunk(text: str, chunk_chars: int) -> list[str]:
    if chunk_chars <= 0:
        raise ValueError("chunk_chars must be positive")
    return [text[i : i + chunk_chars] for i in range(0, len(text), chunk_chars)]


def _pool_unit(vectors: list[list[float]], expected_dim: int, label: str) -> tuple[float, ...]:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != expected_dim:
        raise DimensionMismatch(
            f"{label}: provider returned width {arr.shape[-1] if arr.ndim == 2 else '?'}, "
            f"configured {expected_dim}"
        )
    pooled = arr.mean(axis=0)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0:
        raise ValueError(f"{label}: pooled vector has zero norm")
    return tuple((pooled / norm).tolist())


def compute_item_features(
    item: FilingItem,
    provider: FeatureProvider,
    finance_dim: int = DEFAULT_FINANCE_DIM,
    general_dim: int = DEFAULT_GENERAL_DIM,
    chunk_chars: int = DEFAULT_CHUNK_CHARS,
) -> ItemFeatures:
    """Compute the hybrid representation of one non-stub item."""
    if item.stub:
        raise ValueError(f"item {item.item_id} is a stub; features not computed")
    if not item.body:
        raise ValueError(f"item {item.item_id} has an empty body")
    chunks = _chunk(item.body, chunk_chars)
    finance = _pool_unit(provider.embed_finance(chunks), finance_dim, "finance_vec")
    general = _pool_unit(provider.embed_general(chunks), general_dim, "general_vec")
    scores = provider.sentiment(chunks)
    if len(scores) != len(chunks):
        raise DimensionMismatch("sentiment: provider returned wrong batch length")
    sent = max(-1.0, min(1.0, float(sum(scores)) / len(scores)))
    return ItemFeatures(finance_vec=finance, general_vec=general, sentiment=sent)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_POSITIVE_WORDS = frozenset(
    """growth growing grew profit profitable strong strength improved improvement
    expansion expanded record robust favorable exceeded innovation resilient
    efficient efficiency gains momentum""".split()
)
_NEGATIVE_WORDS = frozenset(
    """loss losses decline declining risk risks litigation default impairment
    weak weakness adverse restructuring delinquent downturn uncertainty breach
    investigation covenant shortfall deterioration writedown""".split()
)


class HashFeatureProvider:
    """Deterministic token-hash featurizer for offline corpora.

    Each token maps to a fixed gaussian vector seeded from its sha256, and
    a text embeds as the normalized sum of its token vectors, so texts with
    overlapping vocabulary land near each other in cosine space. Sentiment
    is a tone-wordlist balance. No model weights, no network, stable
    across runs and platforms.
    """

    def __init__(
        self,
        finance_dim: int = DEFAULT_FINANCE_DIM,
        general_dim: int = DEFAULT_GENERAL_DIM,
        seed: int = 0,
    ):
        self.finance_dim = finance_dim
        self.general_dim = general_dim
        self.seed = seed
        self.provider_id = f"hash-v1:{finance_dim}/{general_dim}/seed={seed}"
        self.calls = 0
        self._token_cache: dict[tuple[str, str], np.ndarray] = {}

    def _token_vec(self, namespace: str, token: str, dim: int) -> np.ndarray:
        cache_key = (namespace, token)
        vec = self._token_cache.get(cache_key)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}|{namespace}|{token}".encode()).digest()
            rng = np.random.RandomState(int.from_bytes(digest[:4], "big"))
            vec = rng.standard_normal(dim)
            self._token_cache[cache_key] = vec
        return vec

    def _embed(self, texts: Sequence[str], namespace: str, dim: int) -> list[list[float]]:
        self.calls += 1
        out = []
        for text in texts:
            tokens = _TOKEN_RE.findall(text.lower())
            acc = np.zeros(dim)
            for tok in tokens:
                acc += self._token_vec(namespace, tok, dim)
            if not tokens or not np.any(acc):
                acc = self._token_vec(namespace, "", dim)
            out.append((acc / np.linalg.norm(acc)).tolist())
        return out

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]:
        return self._embed(texts, "finance", self.finance_dim)

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]:
        return self._embed(texts, "general", self.general_dim)

    def sentiment(self, texts: Sequence[str]) -> list[float]:
        self.calls += 1
        out = []
        for text in texts:
            tokens = _TOKEN_RE.findall(text.lower())
            pos = sum(1 for t in tokens if t in _POSITIVE_WORDS)
            neg = sum(1 for t in tokens if t in _NEGATIVE_WORDS)
            out.append(0.0 if pos + neg == 0 else (pos - neg) / (pos + neg))
        return out


class FixtureProvider:
    """Replays recorded vectors keyed by text digest; raises on unknown text."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.calls = 0
        data = json.loads(self.path.read_text())
        self.provider_id = data.get("provider_id", f"fixture:{self.path.name}")
        self._by_digest: dict[str, dict] = data["texts"]

    def _lookup(self, text: str) -> dict:
        digest = content_digest(text)
        rec = self._by_digest.get(digest)
        if rec is None:
            raise ProviderUnavailable(f"no recorded vectors for text digest {digest[:12]}…")
        return rec

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [self._lookup(t)["finance"] for t in texts]

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [self._lookup(t)["general"] for t in texts]

    def sentiment(self, texts: Sequence[str]) -> list[float]:
        self.calls += 1
        return [float(self._lookup(t)["sentiment"]) for t in texts]


class HttpFeatureProvider:
    """Client for the embedding sidecar's HTTP contract."""

    def __init__(self, base_url: str, timeout: float = 30.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.calls = 0
        self._session = session or requests.Session()
        self.provider_id = f"http:{self.base_url}"

    def health(self) -> dict:
        return self._get_json("/health")

    def _get_json(self, path: str) -> dict:
        try:
            resp = self._session.get(self.base_url + path, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise ProviderUnavailable(f"GET {path}: {exc}") from exc

    def _post_json(self, path: str, texts: Sequence[str]) -> dict:
        self.calls += 1
        try:
            resp = self._session.post(
                self.base_url + path, json={"texts": list(texts)}, timeout=self.timeout
            )
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise ProviderUnavailable(f"POST {path}: {exc}") from exc

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]:
        return self._post_json("/embed/finance", texts)["vectors"]

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]:
        return self._post_json("/embed/general", texts)["vectors"]

    def sentiment(self, texts: Sequence[str]) -> list[float]:
        return [float(s) for s in self._post_json("/sentiment", texts)["scores"]]


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

def _q9(x: float) -> float:
    """Quantize to 9 significant digits, the store's serialized precision."""
    return float(f"{x:.9g}")


def _quantize(features: ItemFeatures) -> ItemFeatures:
    return ItemFeatures(
        finance_vec=tuple(_q9(x) for x in features.finance_vec),
        general_vec=tuple(_q9(x) for x in features.general_vec),
        sentiment=_q9(features.sentiment),
    )


class FeatureStore:
    """In-memory (key, item_id) -> FeatureRecord map with JSONL persistence."""

    def __init__(self):
        self._records: dict[tuple[CompanyYearKey, str], FeatureRecord] = {}
        self._dims: tuple[int, int] | None = None

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> Iterable[FeatureRecord]:
        return self._records.values()

    def get(self, key: CompanyYearKey, item_id: str) -> FeatureRecord | None:
        return self._records.get((key, item_id))

    def put(self, record: FeatureRecord) -> FeatureRecord:
        quantized = FeatureRecord(
            key=record.key,
            item_id=record.item_id,
            features=_quantize(record.features),
            provider_id=record.provider_id,
            content_digest=record.content_digest,
        )
        dims = quantized.features.dims
        if self._dims is None:
            self._dims = dims
        elif dims != self._dims:
            raise DimensionMismatch(f"record dims {dims} differ from store dims {self._dims}")
        self._records[(quantized.key, quantized.item_id)] = quantized
        return quantized


def get_or_compute(
    store: FeatureStore,
    key: CompanyYearKey,
    item: FilingItem,
    provider: FeatureProvider,
    finance_dim: int = DEFAULT_FINANCE_DIM,
    general_dim: int = DEFAULT_GENERAL_DIM,
    chunk_chars: int = DEFAULT_CHUNK_CHARS,
) -> ItemFeatures:
    """Cache lookup guarded by the body digest; recompute and overwrite on mismatch."""
    digest = content_digest(item.body)
    cached = store.get(key, item.item_id)
    if cached is not None and cached.content_digest == digest:
        return cached.features
    features = compute_item_features(item, provider, finance_dim, general_dim, chunk_chars)
    stored = store.put(
        FeatureRecord(
            key=key,
            item_id=item.item_id,
            features=features,
            provider_id=provider.provider_id,
            content_digest=digest,
        )
    )
    return stored.features


def save_store(store: FeatureStore, path: str | Path) -> None:
    lines = []
    for record in sorted(
        store.records(), key=lambda r: (r.key.company_id, r.key.fiscal_year, r.item_id)
    ):
        lines.append(json.dumps(record.as_dict(), sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_store(path: str | Path) -> FeatureStore:
    store = FeatureStore()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = FeatureRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorruptRecord(str(exc), line=lineno) from exc
            store.put(record)
    return store
