"""Pipeline configuration: one JSON file drives every stage.

Schema (all keys optional unless noted):
{
  "alpha": 5.0,                  softmax temperature over history years
  "window_k": 3,                 history window length
  "delta": 0.15,                 composite divergence threshold
  "w_high": 0.7, "w_base": 0.5,  composite weights
  "vector_choice": "finance",    similarity basis: finance | general
  "item_set": [...],             key 10-K items to ingest/feature
  "business_items": [...], "governance_items": [...],
  "min_body_chars": 200,
  "features": {"finance_dim": 768, "general_dim": 384, "chunk_chars": 4000,
                "store": "features.jsonl", "provider": "synthetic"|"http:<url>"},
  "fra_policy": {"dev_minor": .., "dev_major": .., "yoy_major": ..,
                  "max_notches": .., "min_support": ..,
                  "directionality": {indicator: true|false}},
  "caa": {"mode": "deterministic"|"llm", "weights": {"CRA": .., ...}},
  "backend": {"type": "mock"|"http", "url": .., "model": ..,
               "temperature": .., "seed": .., "rules_file": ..},
  "split": {"cutoff_year": <int, required by the harness>},
  "workers": 1
}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .features import DEFAULT_CHUNK_CHARS, DEFAULT_FINANCE_DIM, DEFAULT_GENERAL_DIM
from .filings import DEFAULT_KEY_ITEMS, DEFAULT_MIN_BODY_CHARS
from .fra_quant import DEFAULT_MIN_SUPPORT, AdjustmentPolicy
from .fusion import DEFAULT_CAA_WEIGHTS, FusionParams
from .history import DEFAULT_ALPHA, DEFAULT_WINDOW_K
from .agents import DEFAULT_BUSINESS_ITEMS, DEFAULT_GOVERNANCE_ITEMS
from .ratings import digest_of


@dataclass(frozen=True)
class BackendConfig:
    type: str = "mock"
    url: str = ""
    model: str = ""
    temperature: float = 0.0
    seed: int = 0
    rules_file: str = ""


@dataclass(frozen=True)
class FeaturesConfig:
    finance_dim: int = DEFAULT_FINANCE_DIM
    general_dim: int = DEFAULT_GENERAL_DIM
    chunk_chars: int = DEFAULT_CHUNK_CHARS
    store: str = "features.jsonl"
    provider: str = "synthetic"


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = DEFAULT_ALPHA
    window_k: int = DEFAULT_WINDOW_K
    delta: float = 0.15
    w_high: float = 0.7
    w_base: float = 0.5
    vector_choice: str = "finance"
    item_set: frozenset[str] = DEFAULT_KEY_ITEMS
    business_items: frozenset[str] = DEFAULT_BUSINESS_ITEMS
    governance_items: frozenset[str] = DEFAULT_GOVERNANCE_ITEMS
    min_body_chars: int = DEFAULT_MIN_BODY_CHARS
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    fra_policy: AdjustmentPolicy = field(default_factory=AdjustmentPolicy)
    fra_min_support: int = DEFAULT_MIN_SUPPORT
    caa_mode: str = "deterministic"
    caa_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CAA_WEIGHTS))
    backend: BackendConfig = field(default_factory=BackendConfig)
    cutoff_year: int | None = None
    workers: int = 1

    def fusion_params(self) -> FusionParams:
        return FusionParams(delta=self.delta, w_high=self.w_high, w_base=self.w_base)

    def as_dict(self) -> dict[str, Any]:
        """Canonical dict used for the config fingerprint and results files."""
        return {
            "alpha": self.alpha,
            "window_k": self.window_k,
            "delta": self.delta,
            "w_high": self.w_high,
            "w_base": self.w_base,
            "vector_choice": self.vector_choice,
            "item_set": sorted(self.item_set),
            "business_items": sorted(self.business_items),
            "governance_items": sorted(self.governance_items),
            "min_body_chars": self.min_body_chars,
            "features": {
                "finance_dim": self.features.finance_dim,
                "general_dim": self.features.general_dim,
                "chunk_chars": self.features.chunk_chars,
                "store": self.features.store,
                "provider": self.features.provider,
            },
            "fra_policy": {
                "dev_minor": self.fra_policy.dev_minor,
                "dev_major": self.fra_policy.dev_major,
                "yoy_major": self.fra_policy.yoy_major,
                "max_notches": self.fra_policy.max_notches,
                "directionality": dict(sorted(self.fra_policy.directionality.items())),
            },
            "fra_min_support": self.fra_min_support,
            "caa": {"mode": self.caa_mode, "weights": dict(sorted(self.caa_weights.items()))},
            "backend": {
                "type": self.backend.type,
                "url": self.backend.url,
                "model": self.backend.model,
                "temperature": self.backend.temperature,
                "seed": self.backend.seed,
                # basename only: fingerprints must not vary with checkout location
                "rules_file": Path(self.backend.rules_file).name if self.backend.rules_file else "",
            },
            "split": {"cutoff_year": self.cutoff_year},
            "workers": self.workers,
        }

    def fingerprint(self) -> str:
        return digest_of(self.as_dict())


def load_config(path: str | Path) -> PipelineConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def config_from_dict(raw: Mapping[str, Any]) -> PipelineConfig:
    feats = raw.get("features", {})
    policy = raw.get("fra_policy", {})
    caa = raw.get("caa", {})
    backend = raw.get("backend", {})
    split = raw.get("split", {})
    return PipelineConfig(
        alpha=float(raw.get("alpha", DEFAULT_ALPHA)),
        window_k=int(raw.get("window_k", DEFAULT_WINDOW_K)),
        delta=float(raw.get("delta", 0.15)),
        w_high=float(raw.get("w_high", 0.7)),
        w_base=float(raw.get("w_base", 0.5)),
        vector_choice=str(raw.get("vector_choice", "finance")),
        item_set=frozenset(raw.get("item_set", DEFAULT_KEY_ITEMS)),
        business_items=frozenset(raw.get("business_items", DEFAULT_BUSINESS_ITEMS)),
        governance_items=frozenset(raw.get("governance_items", DEFAULT_GOVERNANCE_ITEMS)),
        min_body_chars=int(raw.get("min_body_chars", DEFAULT_MIN_BODY_CHARS)),
        features=FeaturesConfig(
            finance_dim=int(feats.get("finance_dim", DEFAULT_FINANCE_DIM)),
            general_dim=int(feats.get("general_dim", DEFAULT_GENERAL_DIM)),
            chunk_chars=int(feats.get("chunk_chars", DEFAULT_CHUNK_CHARS)),
            store=str(feats.get("store", "features.jsonl")),
            provider=str(feats.get("provider", "synthetic")),
        ),
        fra_policy=AdjustmentPolicy(
            dev_minor=float(policy.get("dev_minor", 0.25)),
            dev_major=float(policy.get("dev_major", 0.75)),
            yoy_major=float(policy.get("yoy_major", 0.40)),
            max_notches=int(policy.get("max_notches", 2)),
            directionality={k: bool(v) for k, v in policy.get("directionality", {}).items()},
        ),
        fra_min_support=int(policy.get("min_support", DEFAULT_MIN_SUPPORT)),
        caa_mode=str(caa.get("mode", "deterministic")),
        caa_weights=dict(caa.get("weights", DEFAULT_CAA_WEIGHTS)),
        backend=BackendConfig(
            type=str(backend.get("type", "mock")),
            url=str(backend.get("url", "")),
            model=str(backend.get("model", "")),
            temperature=float(backend.get("temperature", 0.0)),
            seed=int(backend.get("seed", 0)),
            rules_file=str(backend.get("rules_file", "")),
        ),
        cutoff_year=int(split["cutoff_year"]) if "cutoff_year" in split else None,
        workers=int(raw.get("workers", 1)),
    )
