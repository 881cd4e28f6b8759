"""Feature bundles: the models that back the HTTP contract.

Two interchangeable implementations:

- ``TransformersBundle`` serves pretrained encoders (a finance-domain
  masked-LM mean-pooled over tokens, a general sentence encoder, and a
  tone classifier mapped to P(positive) - P(negative)). Weights load
  lazily; until they are ready the service answers 503.
- ``HashBundle`` is a deterministic token-hash featurizer with the same
  interface, used for offline fixtures and tests: every token maps to a
  fixed gaussian vector seeded from its sha256 and a text embeds as the
  normalized token-vector sum.

Both advertise ``provider_id`` including the pooling mode so exported
fixture records carry their provenance.
"""
from __future__ import annotations

import hashlib
import os
import re
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

DEFAULT_FINANCE_MODEL = "yiyanghkust/finbert-pretrain"
DEFAULT_GENERAL_MODEL = "sentence-transformers/all-MiniLM-L6-v2"
DEFAULT_TONE_MODEL = "yiyanghkust/finbert-tone"
DEFAULT_FINANCE_DIM = 768
DEFAULT_GENERAL_DIM = 384
DEFAULT_BATCH_MAX = 32


@dataclass(frozen=True)
class SidecarConfig:
    backend: str = "hash"  # hash | models
    finance_model: str = DEFAULT_FINANCE_MODEL
    general_model: str = DEFAULT_GENERAL_MODEL
    tone_model: str = DEFAULT_TONE_MODEL
    finance_dim: int = DEFAULT_FINANCE_DIM
    general_dim: int = DEFAULT_GENERAL_DIM
    batch_max: int = DEFAULT_BATCH_MAX
    seed: int = 0

    @classmethod
    def from_env(cls) -> "SidecarConfig":
        env = os.environ
        return cls(
            backend=env.get("SIDECAR_BACKEND", "hash"),
            finance_model=env.get("SIDECAR_FINANCE_MODEL", DEFAULT_FINANCE_MODEL),
            general_model=env.get("SIDECAR_GENERAL_MODEL", DEFAULT_GENERAL_MODEL),
            tone_model=env.get("SIDECAR_TONE_MODEL", DEFAULT_TONE_MODEL),
            finance_dim=int(env.get("SIDECAR_FINANCE_DIM", DEFAULT_FINANCE_DIM)),
            general_dim=int(env.get("SIDECAR_GENERAL_DIM", DEFAULT_GENERAL_DIM)),
            batch_max=int(env.get("SIDECAR_BATCH_MAX", DEFAULT_BATCH_MAX)),
            seed=int(env.get("SIDECAR_SEED", "0")),
        )


class FeatureBundle(Protocol):
    provider_id: str

    def ready(self) -> bool: ...

    def dims(self) -> dict[str, int]: ...

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]: ...

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]: ...

    def sentiment(self, texts: Sequence[str]) -> list[float]: ...


_TOKEN_RE = re.compile(r"[a-z0-9]+")

_POSITIVE = frozenset(
    """growth growing grew profit profitable strong strength improved improvement
    expansion expanded record robust favorable exceeded innovation resilient
    efficient efficiency gains momentum""".split()
)
_NEGATIVE = frozenset(
    """loss losses decline declining risk risks litigation default impairment
    weak weakness adverse restructuring delinquent downturn uncertainty breach
    investigation covenant shortfall deterioration writedown""".split()
)


class HashBundle:
    """Deterministic stand-in bundle; no weights, no network, stable forever."""

    def __init__(self, config: SidecarConfig):
        self._config = config
        self._cache: dict[tuple[str, str], np.ndarray] = {}
        self.provider_id = (
            f"sidecar-hash-v1:{config.finance_dim}/{config.general_dim}/seed={config.seed}"
        )

    def ready(self) -> bool:
        return True

    def dims(self) -> dict[str, int]:
        return {"finance": self._config.finance_dim, "general": self._config.general_dim}

    def _token_vec(self, namespace: str, token: str, dim: int) -> np.ndarray:
        key = (namespace, token)
        vec = self._cache.get(key)
        if vec is None:
            digest = hashlib.sha256(
                f"{self._config.seed}|{namespace}|{token}".encode()
            ).digest()
            rng = np.random.RandomState(int.from_bytes(digest[:4], "big"))
            vec = rng.standard_normal(dim)
            self._cache[key] = vec
        return vec

    def _embed(self, texts: Sequence[str], namespace: str, dim: int) -> list[list[float]]:
        out = []
        for text in texts:
            tokens = _TOKEN_RE.findall(text.lower())
            acc = np.zeros(dim)
            for token in tokens:
                acc += self._token_vec(namespace, token, dim)
            if not tokens or not np.any(acc):
                acc = self._token_vec(namespace, "", dim)
            out.append((acc / np.linalg.norm(acc)).tolist())
        return out

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]:
        return self._embed(texts, "finance", self._config.finance_dim)

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]:
        return self._embed(texts, "general", self._config.general_dim)

    def sentiment(self, texts: Sequence[str]) -> list[float]:
        scores = []
        for text in texts:
            tokens = _TOKEN_RE.findall(text.lower())
            pos = sum(1 for t in tokens if t in _POSITIVE)
            neg = sum(1 for t in tokens if t in _NEGATIVE)
            scores.append(0.0 if pos + neg == 0 else (pos - neg) / (pos + neg))
        return scores


class TransformersBundle:
    """Pretrained-model bundle; loads lazily and reports readiness.

    Finance vectors mean-pool the encoder's last hidden state (the pooling
    mode is part of provider_id); general vectors come from the sentence
    encoder; sentiment maps the tone classifier to P(positive) -
    P(negative) in [-1, 1].
    """

    def __init__(self, config: SidecarConfig):
        self._config = config
        self._lock = threading.Lock()
        self._ready = False
        self._error: str | None = None
        self._finance = None
        self._general = None
        self._tone = None
        self.provider_id = (
            f"transformers:{config.finance_model}:mean-pool|{config.general_model}|{config.tone_model}"
        )

    def load(self) -> None:
        """Blocking weight load; safe to call from a warmup thread."""
        with self._lock:
            if self._ready or self._error:
                return
            try:
                import torch
                from sentence_transformers import SentenceTransformer
                from transformers import (
                    AutoModel,
                    AutoTokenizer,
                    pipeline,
                )

                tokenizer = AutoTokenizer.from_pretrained(self._config.finance_model)
                model = AutoModel.from_pretrained(self._config.finance_model)
                model.eval()
                self._finance = (tokenizer, model, torch)
                self._general = SentenceTransformer(self._config.general_model)
                self._tone = pipeline(
                    "text-classification", model=self._config.tone_model, top_k=None
                )
                self._ready = True
            except Exception as exc:  # weights unavailable: stay not-ready
                self._error = f"{type(exc).__name__}: {exc}"

    def start_background_load(self) -> None:
        threading.Thread(target=self.load, daemon=True).start()

    @property
    def load_error(self) -> str | None:
        return self._error

    def ready(self) -> bool:
        return self._ready

    def dims(self) -> dict[str, int]:
        if not self._ready:
            return {"finance": self._config.finance_dim, "general": self._config.general_dim}
        tokenizer, model, _ = self._finance
        return {
            "finance": int(model.config.hidden_size),
            "general": int(self._general.get_sentence_embedding_dimension()),
        }

    def embed_finance(self, texts: Sequence[str]) -> list[list[float]]:
        tokenizer, model, torch = self._finance
        with torch.no_grad():
            batch = tokenizer(
                list(texts), padding=True, truncation=True, max_length=512,
                return_tensors="pt",
            )
            hidden = model(**batch).last_hidden_state
            mask = batch["attention_mask"].unsqueeze(-1)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
            pooled = pooled / pooled.norm(dim=1, keepdim=True).clamp(min=1e-12)
        return pooled.cpu().numpy().tolist()

    def embed_general(self, texts: Sequence[str]) -> list[list[float]]:
        vectors = self._general.encode(
            list(texts), normalize_embeddings=True, show_progress_bar=False
        )
        return np.asarray(vectors).tolist()

    def sentiment(self, texts: Sequence[str]) -> list[float]:
        scores = []
        for result in self._tone(list(texts), truncation=True, max_length=512):
            by_label = {r["label"].lower(): r["score"] for r in result}
            scores.append(
                max(-1.0, min(1.0, by_label.get("positive", 0.0) - by_label.get("negative", 0.0)))
            )
        return scores


def build_bundle(config: SidecarConfig) -> FeatureBundle:
    if config.backend == "hash":
        return HashBundle(config)
    if config.backend == "models":
        return TransformersBundle(config)
    raise ValueError(f"unknown sidecar backend {config.backend!r}")
