"""Evaluation harness: temporal splits, pipeline orchestration, metrics, ablation.

A corpus directory holds raw filings, ground-truth labels, financial
indicators, and (optionally) a precomputed feature store:

    corpus/
      filings/<company>_<year>_<sector>.txt
      labels.csv        company_id,fiscal_year,sector,rating
      financials.csv    company_id,fiscal_year,sector,<indicator...>
      features.jsonl    feature store (optional; misses go to the provider)

Runs honor the temporal split: industry baselines see only reference
years (< cutoff) and a key's history window never reads data from that
key's year or later.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import re
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import agents as agents_mod
from .agents import AgentContext, ChatBackend, ChatParams, MockChatBackend
from .config import PipelineConfig
from .errors import DegenerateSplit, MissingPrediction
from .features import (
    FeatureStore,
    HashFeatureProvider,
    HttpFeatureProvider,
    get_or_compute,
    load_store,
)
from .filings import FilingDocument, parse_filing, select_key_items, strip_markup
from .fra_quant import (
    FinancialVector,
    IndustryBaselines,
    compute_baselines,
    compute_deviations,
    load_financials_csv,
    propose_rating_adjustment,
)
from .fusion import FinalDecision, decide_caa, fuse_cra
from .history import (
    HistoryEntry,
    HistoryWindow,
    SimilarityWeights,
    build_history_window,
    weights_for_window,
)
from .ratings import (
    AgentId,
    CompanyYearKey,
    RatingGrade,
    RiskScore,
    RiskSignal,
    digest_of,
    score_to_grade,
)
from .reporting import render_report, write_report
from .supervision import STAGE_DEPENDENCIES, Stage, TraceEvent, TraceSink

MODE_HISTORY = "history"
MODE_NO_HISTORY = "no_history"

FULL_AGENT_SET = frozenset({AgentId.BRA, AgentId.FRA, AgentId.GRA, AgentId.CRA, AgentId.CAA})

RESULTS_COLUMNS = (
    "mode",
    "agents",
    "alpha",
    "window_k",
    "delta",
    "w_high",
    "n_test",
    "accuracy",
    "weighted_recall",
    "weighted_f1",
)


# ---------------------------------------------------------------------------
# Labels and splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledSample:
    key: CompanyYearKey
    truth: RatingGrade


def load_labels_csv(path: str | Path) -> list[LabeledSample]:
    samples = []
    seen = set()
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            key = CompanyYearKey(row["company_id"], int(row["fiscal_year"]), row["sector"])
            if key in seen:
                raise ValueError(f"line {lineno}: duplicate label for {key}")
            seen.add(key)
            samples.append(LabeledSample(key=key, truth=RatingGrade.parse(row["rating"])))
    return samples


def split_dataset(
    samples: Sequence[LabeledSample], cutoff_year: int
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Temporal split: years < cutoff are reference, >= cutoff are test."""
    reference = [s for s in samples if s.key.fiscal_year < cutoff_year]
    test = [s for s in samples if s.key.fiscal_year >= cutoff_year]
    if not reference or not test:
        raise DegenerateSplit(
            f"cutoff {cutoff_year} leaves reference={len(reference)}, test={len(test)}"
        )
    return reference, test


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    overall_accuracy: float
    per_class: Mapping[RatingGrade, ClassMetrics]
    weighted_recall: float
    weighted_f1: float
    confusion: tuple[tuple[int, ...], ...]  # rows = truth, cols = predicted


def compute_metrics(
    preds: Mapping[CompanyYearKey, RatingGrade], truth: Sequence[LabeledSample]
) -> MetricsReport:
    """Accuracy, per-class precision/recall/F1, and support-weighted averages.

    Classes with zero predictions take precision 0; classes with zero
    support are excluded from the weighted averages.
    """
    if not truth:
        raise ValueError("truth set must be non-empty")
    n = len(RatingGrade)
    confusion = [[0] * n for _ in range(n)]
    for sample in truth:
        pred = preds.get(sample.key)
        if pred is None:
            raise MissingPrediction(sample.key)
        confusion[sample.truth.index][pred.index] += 1
    total = len(truth)
    correct = sum(confusion[i][i] for i in range(n))
    per_class: dict[RatingGrade, ClassMetrics] = {}
    for i, grade in enumerate(RatingGrade):
        support = sum(confusion[i])
        predicted = sum(confusion[r][i] for r in range(n))
        tp = confusion[i][i]
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[grade] = ClassMetrics(precision, recall, f1, support)
    supported = [m for m in per_class.values() if m.support]
    weight_total = sum(m.support for m in supported)
    return MetricsReport(
        overall_accuracy=correct / total,
        per_class=per_class,
        weighted_recall=sum(m.recall * m.support for m in supported) / weight_total,
        weighted_f1=sum(m.f1 * m.support for m in supported) / weight_total,
        confusion=tuple(tuple(row) for row in confusion),
    )


# ---------------------------------------------------------------------------
# Ablation configuration
# ---------------------------------------------------------------------------

_ALLOWED_AGENT_SETS = (
    frozenset({AgentId.BRA}),
    frozenset({AgentId.FRA}),
    frozenset({AgentId.GRA}),
    frozenset({AgentId.BRA, AgentId.FRA, AgentId.CRA}),
    FULL_AGENT_SET,
)


@dataclass(frozen=True)
class AblationConfig:
    """Which mode and agent subset a run exercises.

    CRA requires BRA+FRA and CAA requires CRA+GRA, so the valid subsets
    are the three singletons, BRA+FRA+CRA, and the full set.
    """

    mode: str = MODE_HISTORY
    agent_set: frozenset[AgentId] = FULL_AGENT_SET

    def __post_init__(self):
        if self.mode not in (MODE_HISTORY, MODE_NO_HISTORY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if AgentId.CRA in self.agent_set and not {AgentId.BRA, AgentId.FRA} <= self.agent_set:
            raise ValueError("CRA requires BRA and FRA")
        if AgentId.CAA in self.agent_set and not {AgentId.CRA, AgentId.GRA} <= self.agent_set:
            raise ValueError("CAA requires CRA and GRA")
        if self.agent_set not in _ALLOWED_AGENT_SETS:
            raise ValueError(f"unsupported agent set {sorted(a.value for a in self.agent_set)}")

    @property
    def prediction_agent(self) -> AgentId:
        if AgentId.CAA in self.agent_set:
            return AgentId.CAA
        if AgentId.CRA in self.agent_set:
            return AgentId.CRA
        return next(iter(self.agent_set))

    def stages(self) -> tuple[Stage, ...]:
        text_agents = self.agent_set & {AgentId.BRA, AgentId.GRA}
        stages: list[Stage] = []
        if text_agents:
            stages += [Stage.INGEST, Stage.FEATURES, Stage.HISTORY]
        if AgentId.FRA in self.agent_set:
            stages.append(Stage.FRA_QUANT)
        if AgentId.BRA in self.agent_set:
            stages.append(Stage.BRA)
        if AgentId.FRA in self.agent_set:
            stages.append(Stage.FRA)
        if AgentId.GRA in self.agent_set:
            stages.append(Stage.GRA_INIT)
        if AgentId.CRA in self.agent_set:
            stages.append(Stage.CRA)
        if AgentId.CAA in self.agent_set:
            stages += [Stage.GRA_ADJ, Stage.CAA, Stage.RRA]
        return tuple(stages)

    def label(self) -> str:
        order = [AgentId.BRA, AgentId.FRA, AgentId.GRA, AgentId.CRA, AgentId.CAA]
        return "+".join(a.value for a in order if a in self.agent_set)


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

@dataclass
class Corpus:
    root: Path
    documents: dict[CompanyYearKey, FilingDocument]
    labels: dict[tuple[str, int], LabeledSample]
    financials: dict[tuple[str, int], FinancialVector]
    indicator_schema: tuple[str, ...]
    store: FeatureStore


def load_corpus(root: str | Path, store_name: str = "features.jsonl") -> Corpus:
    root = Path(root)
    documents: dict[CompanyYearKey, FilingDocument] = {}
    filings_dir = root / "filings"
    if filings_dir.is_dir():
        for path in sorted(filings_dir.glob("*.txt")):
            key = key_from_filename(path.name)
            documents[key] = FilingDocument(
                key=key, source_uri=str(path), raw_text=strip_markup(path.read_text())
            )
    labels = {
        (s.key.company_id, s.key.fiscal_year): s for s in load_labels_csv(root / "labels.csv")
    }
    financial_rows = load_financials_csv(root / "financials.csv")
    financials = {(f.key.company_id, f.key.fiscal_year): f for f in financial_rows}
    schema = tuple(sorted({name for f in financial_rows for name in f.indicators}))
    store_path = root / store_name
    store = load_store(store_path) if store_path.exists() else FeatureStore()
    return Corpus(
        root=root,
        documents=documents,
        labels=labels,
        financials=financials,
        indicator_schema=schema,
        store=store,
    )


def key_from_filename(name: str) -> CompanyYearKey:
    """`<company>_<year>_<sector>.txt`; the company part may contain underscores."""
    parts = Path(name).stem.split("_")
    if len(parts) < 3:
        raise ValueError(f"filing name {name!r} is not <company>_<year>_<sector>.txt")
    return CompanyYearKey("_".join(parts[:-2]), int(parts[-2]), parts[-1])


def build_backend(config: PipelineConfig) -> ChatBackend:
    if config.backend.type == "mock":
        if config.backend.rules_file:
            backend = MockChatBackend.from_file(config.backend.rules_file)
            backend.seed = config.backend.seed or backend.seed
            return backend
        return MockChatBackend(seed=config.backend.seed)
    if config.backend.type == "http":
        return agents_mod.HttpChatBackend(url=config.backend.url, model=config.backend.model)
    raise ValueError(f"unknown backend type {config.backend.type!r}")


def build_provider(config: PipelineConfig):
    source = config.features.provider
    if source == "synthetic":
        return HashFeatureProvider(config.features.finance_dim, config.features.general_dim)
    if source.startswith(("http://", "https://")):
        return HttpFeatureProvider(source)
    if source.startswith("http:"):  # labeled form, e.g. "http:http://host:8099"
        return HttpFeatureProvider(source.removeprefix("http:"))
    raise ValueError(f"unknown feature provider {source!r}")


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

class _CountingBackend:
    """Per-stage wrapper so trace events attribute backend calls correctly."""

    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.calls = 0

    def complete(self, system_text: str, user_text: str, params: ChatParams) -> str:
        self.calls += 1
        return self.inner.complete(system_text, user_text, params)


@dataclass
class KeyOutcome:
    key: CompanyYearKey
    prediction: RatingGrade | None
    decision: FinalDecision | None
    signals: dict[AgentId, RiskSignal]
    weights: SimilarityWeights | None
    error: str | None


@dataclass
class PipelineResult:
    run_id: str
    predictions: dict[CompanyYearKey, RatingGrade]
    outcomes: dict[CompanyYearKey, KeyOutcome]
    trace_events: list[TraceEvent]
    trace_path: Path | None
    report_paths: list[Path]
    expected_stages: tuple[Stage, ...]
    partial: bool


class _StageRecorder:
    def __init__(self, run_id: str, key: CompanyYearKey, sink: TraceSink | None,
                 events: list[TraceEvent], lock: threading.Lock):
        self.run_id = run_id
        self.key = key
        self.sink = sink
        self.events = events
        self.lock = lock
        self.outputs: dict[Stage, str] = {}

    def chained_inputs(self, stage: Stage, external: object = None) -> str:
        deps = STAGE_DEPENDENCIES[stage]
        if deps:
            return digest_of({dep.value: self.outputs.get(dep, "") for dep in deps})
        return digest_of(external)

    def run(self, stage: Stage, work: Callable[[], tuple[object, int]], external_inputs: object = None):
        """Execute one stage, recording digests, timings, and errors."""
        inputs_digest = self.chained_inputs(stage, external_inputs)
        started = time.monotonic()
        try:
            output_payload, backend_calls = work()
        except Exception as exc:
            self._emit(stage, inputs_digest, "", started, time.monotonic(), 0, f"{type(exc).__name__}: {exc}")
            raise
        outputs_digest = digest_of(output_payload)
        self.outputs[stage] = outputs_digest
        self._emit(stage, inputs_digest, outputs_digest, started, time.monotonic(), backend_calls, None)

    def _emit(self, stage, inputs_digest, outputs_digest, started, ended, backend_calls, error):
        event = TraceEvent(
            run_id=self.run_id,
            key=self.key,
            stage=stage,
            inputs_digest=inputs_digest,
            outputs_digest=outputs_digest,
            started=started,
            ended=ended,
            backend_calls=backend_calls,
            error=error,
        )
        with self.lock:
            self.events.append(event)
        if self.sink is not None:
            self.sink.record_event(event)


def _reference_entries(
    corpus: Corpus, config: PipelineConfig, provider
) -> dict[str, list[HistoryEntry]]:
    """Per-company history entries from every labeled company-year with a filing."""
    features_by_year: dict[tuple[str, int], dict] = {}
    for record in corpus.store.records():
        features_by_year.setdefault(
            (record.key.company_id, record.key.fiscal_year), {}
        )[record.item_id] = record.features
    entries: dict[str, list[HistoryEntry]] = {}
    for (company, year), sample in corpus.labels.items():
        key = sample.key
        item_features = features_by_year.get((company, year))
        if item_features is None and key in corpus.documents:
            item_features = _compute_document_features(corpus, config, key, provider)
        if item_features is None:
            continue
        entries.setdefault(company, []).append(
            HistoryEntry(
                year=year,
                item_features=item_features,
                financials=corpus.financials.get((company, year)),
                grade=sample.truth,
            )
        )
    return entries


def _compute_document_features(corpus: Corpus, config: PipelineConfig, key: CompanyYearKey, provider) -> dict:
    doc = corpus.documents[key]
    items = parse_filing(doc, config.min_body_chars)
    selected, _ = select_key_items(items, config.item_set)
    out = {}
    for item_id, item in sorted(selected.items()):
        if item.stub:
            continue
        out[item_id] = get_or_compute(
            corpus.store, key, item, provider,
            config.features.finance_dim, config.features.general_dim, config.features.chunk_chars,
        )
    return out


def run_pipeline(
    config: PipelineConfig,
    corpus: Corpus,
    backend: ChatBackend,
    ablation: AblationConfig | None = None,
    out_dir: str | Path | None = None,
    trace_path: str | Path | None = None,
    run_id: str | None = None,
) -> PipelineResult:
    """Execute the agent pipeline over every test key of the corpus.

    Stage failures are recorded in the trace and skip the key; the run is
    then marked partial rather than aborted.
    """
    if config.cutoff_year is None:
        raise ValueError("config.split.cutoff_year is required to run the pipeline")
    ablation = ablation or AblationConfig()
    run_id = run_id or f"run-{uuid.uuid4().hex[:8]}"
    provider = build_provider(config)
    reference, test = split_dataset(list(corpus.labels.values()), config.cutoff_year)
    baselines = compute_baselines(
        [corpus.financials[(s.key.company_id, s.key.fiscal_year)]
         for s in reference if (s.key.company_id, s.key.fiscal_year) in corpus.financials],
        min_support=config.fra_min_support,
    )
    history_entries = _reference_entries(corpus, config, provider)

    sink = TraceSink(trace_path) if trace_path is not None else None
    events: list[TraceEvent] = []
    events_lock = threading.Lock()
    report_paths: list[Path] = []
    reports_lock = threading.Lock()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    needs_text = bool(ablation.agent_set & {AgentId.BRA, AgentId.GRA})
    test_keys = sorted(
        (s.key for s in test if not needs_text or s.key in corpus.documents),
        key=lambda k: (k.company_id, k.fiscal_year),
    )

    def process(key: CompanyYearKey) -> KeyOutcome:
        recorder = _StageRecorder(run_id, key, sink, events, events_lock)
        try:
            return _process_key(
                key, corpus, config, backend, ablation, baselines, history_entries,
                provider, recorder, out_dir, report_paths, reports_lock,
            )
        except Exception as exc:
            return KeyOutcome(key, None, None, {}, None, f"{type(exc).__name__}: {exc}")

    if config.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(process, test_keys))
    else:
        outcomes = [process(key) for key in test_keys]

    if sink is not None:
        sink.close()
    outcome_map = {o.key: o for o in outcomes}
    predictions = {o.key: o.prediction for o in outcomes if o.prediction is not None}
    return PipelineResult(
        run_id=run_id,
        predictions=predictions,
        outcomes=outcome_map,
        trace_events=events,
        trace_path=Path(trace_path) if trace_path is not None else None,
        report_paths=sorted(report_paths),
        expected_stages=ablation.stages(),
        partial=any(o.error for o in outcomes),
    )


def _process_key(
    key: CompanyYearKey,
    corpus: Corpus,
    config: PipelineConfig,
    backend: ChatBackend,
    ablation: AblationConfig,
    baselines: IndustryBaselines,
    history_entries: dict[str, list[HistoryEntry]],
    provider,
    recorder: _StageRecorder,
    out_dir: str | Path | None,
    report_paths: list[Path],
    reports_lock: threading.Lock,
) -> KeyOutcome:
    agent_set = ablation.agent_set
    history_mode = ablation.mode == MODE_HISTORY
    params = ChatParams(temperature=config.backend.temperature, seed=config.backend.seed)
    signals: dict[AgentId, RiskSignal] = {}
    items: dict = {}
    item_features: dict = {}
    window: HistoryWindow | None = None
    weights: SimilarityWeights | None = None
    text_agents = agent_set & {AgentId.BRA, AgentId.GRA}

    if text_agents:
        def do_ingest():
            doc = corpus.documents[key]
            parsed = parse_filing(doc, config.min_body_chars)
            selected, missing = select_key_items(parsed, config.item_set)
            items.update(selected)
            payload = {
                "items": [[i, digest_of(selected[i].body), selected[i].stub] for i in sorted(selected)],
                "missing": sorted(missing),
            }
            return payload, 0

        recorder.run(Stage.INGEST, do_ingest, external_inputs={"raw_digest": digest_of(corpus.documents[key].raw_text)})

        def do_features():
            for item_id, item in sorted(items.items()):
                if item.stub:
                    continue
                item_features[item_id] = get_or_compute(
                    corpus.store, key, item, provider,
                    config.features.finance_dim, config.features.general_dim,
                    config.features.chunk_chars,
                )
            return {i: digest_of(list(f.finance_vec[:8])) for i, f in sorted(item_features.items())}, 0

        recorder.run(Stage.FEATURES, do_features)

        def do_history():
            nonlocal window, weights
            if history_mode:
                window = build_history_window(history_entries.get(key.company_id, []), key, config.window_k)
            else:
                window = HistoryWindow(key=key, k=config.window_k, entries=())
            if not window.empty:
                weights = weights_for_window(window, item_features, config.alpha, config.vector_choice)
            payload = {
                "mode": ablation.mode,
                "years": [e.year for e in window.entries],
                "weights": [[y, s, w] for y, s, w in weights.per_year] if weights else [],
            }
            return payload, 0

        recorder.run(Stage.HISTORY, do_history)

    deviation_report = None
    quant_proposal = None
    prev_grade = None
    if AgentId.FRA in agent_set:
        def do_fra_quant():
            nonlocal deviation_report, quant_proposal, prev_grade
            fin = corpus.financials.get((key.company_id, key.fiscal_year))
            if fin is None:
                raise ValueError(f"no financial row for {key}")
            prior = corpus.financials.get((key.company_id, key.fiscal_year - 1)) if history_mode else None
            deviation_report = compute_deviations(fin, prior, baselines, schema=corpus.indicator_schema)
            prev_label = corpus.labels.get((key.company_id, key.fiscal_year - 1)) if history_mode else None
            prev_grade = prev_label.truth if prev_label is not None else None
            base = prev_grade if prev_grade is not None else score_to_grade(RiskScore(0.5))
            quant_proposal = propose_rating_adjustment(base, deviation_report, config.fra_policy)
            payload = {
                "deviations": [[e.indicator, e.value, e.baseline, e.dev, e.status] for e in deviation_report.entries],
                "yoy": sorted(deviation_report.yoy.items()),
                "proposal": list(quant_proposal),
                "prev_grade": prev_grade.value if prev_grade else None,
            }
            return payload, 0

        recorder.run(
            Stage.FRA_QUANT,
            do_fra_quant,
            external_inputs={
                "financials": sorted(
                    corpus.financials[(key.company_id, key.fiscal_year)].indicators.items()
                ) if (key.company_id, key.fiscal_year) in corpus.financials else None,
                "baselines": baselines.dataset_digest,
            },
        )

    def agent_stage(stage: Stage, agent_id: AgentId, runner):
        def do_agent():
            counting = _CountingBackend(backend)
            signal = runner(counting)
            signals[agent_id] = signal
            return signal.as_dict(), counting.calls

        recorder.run(stage, do_agent)

    if AgentId.BRA in agent_set:
        bra_ctx = AgentContext(
            key=key, items=items, item_features=item_features,
            window=window, weights=weights,
        )
        agent_stage(Stage.BRA, AgentId.BRA, lambda b: agents_mod.run_bra(
            bra_ctx, b, params, item_ids=config.business_items))

    if AgentId.FRA in agent_set:
        fra_ctx = AgentContext(
            key=key, deviation_report=deviation_report,
            quant_proposal=quant_proposal, prev_grade=prev_grade,
        )
        agent_stage(Stage.FRA, AgentId.FRA, lambda b: agents_mod.run_fra(fra_ctx, b, params))

    if AgentId.GRA in agent_set:
        gra_ctx = AgentContext(
            key=key, items=items, item_features=item_features,
            window=window, weights=weights,
        )
        agent_stage(Stage.GRA_INIT, AgentId.GRA, lambda b: agents_mod.run_gra_initial(
            gra_ctx, b, params, item_ids=config.governance_items))

    if AgentId.CRA in agent_set:
        def do_cra():
            signal, _ = fuse_cra(signals[AgentId.BRA].score, signals[AgentId.FRA].score, config.fusion_params())
            signals[AgentId.CRA] = signal
            return signal.as_dict(), 0

        recorder.run(Stage.CRA, do_cra)

    decision: FinalDecision | None = None
    if AgentId.CAA in agent_set:
        agent_stage(Stage.GRA_ADJ, AgentId.GRA, lambda b: agents_mod.run_gra_adjust(
            signals[AgentId.GRA], signals[AgentId.CRA], b, params, key=key))

        def do_caa():
            nonlocal decision
            counting = _CountingBackend(backend)
            decision = decide_caa(
                signals,
                mode=config.caa_mode,
                backend=counting if config.caa_mode == "llm" else None,
                weights_cfg=config.caa_weights,
            )
            return decision.as_dict(), counting.calls

        recorder.run(Stage.CAA, do_caa)

        def do_rra():
            report = render_report(decision, key, weights, config.as_dict())
            if out_dir is not None:
                paths = write_report(report, out_dir)
                with reports_lock:
                    report_paths.extend(paths)
            payload = report.to_json_dict()
            payload.pop("generated_at", None)
            return payload, 0

        recorder.run(Stage.RRA, do_rra)

    prediction_signal = signals.get(ablation.prediction_agent)
    if ablation.prediction_agent == AgentId.CAA:
        prediction = decision.grade if decision is not None else None
    elif prediction_signal is not None:
        prediction = prediction_signal.effective_grade()
    else:
        prediction = None
    return KeyOutcome(
        key=key, prediction=prediction, decision=decision,
        signals=signals, weights=weights, error=None,
    )


# ---------------------------------------------------------------------------
# Ablation sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationGrid:
    modes: tuple[str, ...] = (MODE_HISTORY, MODE_NO_HISTORY)
    agent_sets: tuple[frozenset[AgentId], ...] = _ALLOWED_AGENT_SETS
    alphas: tuple[float, ...] = ()
    deltas: tuple[float, ...] = ()
    w_highs: tuple[float, ...] = ()
    window_ks: tuple[int, ...] = ()

    @classmethod
    def from_dict(cls, raw: Mapping) -> "AblationGrid":
        def agent_set(names: Iterable[str]) -> frozenset[AgentId]:
            return frozenset(AgentId(n) for n in names)

        return cls(
            modes=tuple(raw.get("modes", (MODE_HISTORY, MODE_NO_HISTORY))),
            agent_sets=tuple(
                agent_set(s) for s in raw.get("agent_sets", [])
            ) or _ALLOWED_AGENT_SETS,
            alphas=tuple(raw.get("alpha", ())),
            deltas=tuple(raw.get("delta", ())),
            w_highs=tuple(raw.get("w_high", ())),
            window_ks=tuple(raw.get("window_k", ())),
        )


@dataclass(frozen=True)
class AblationRow:
    mode: str
    agents: str
    alpha: float
    window_k: int
    delta: float
    w_high: float
    n_test: int
    metrics: MetricsReport

    def csv_values(self) -> list:
        return [
            self.mode, self.agents,
            f"{self.alpha:g}", str(self.window_k), f"{self.delta:g}", f"{self.w_high:g}",
            str(self.n_test),
            f"{self.metrics.overall_accuracy:.6f}",
            f"{self.metrics.weighted_recall:.6f}",
            f"{self.metrics.weighted_f1:.6f}",
        ]


def run_ablation(
    grid: AblationGrid,
    corpus: Corpus,
    config: PipelineConfig,
    backend: ChatBackend,
) -> list[AblationRow]:
    """One pipeline run and metrics row per grid point."""
    alphas = grid.alphas or (config.alpha,)
    deltas = grid.deltas or (config.delta,)
    w_highs = grid.w_highs or (config.w_high,)
    window_ks = grid.window_ks or (config.window_k,)
    rows = []
    for mode, agent_set, alpha, delta, w_high, window_k in itertools.product(
        grid.modes, grid.agent_sets, alphas, deltas, w_highs, window_ks
    ):
        variant = dataclasses.replace(
            config, alpha=alpha, delta=delta, w_high=w_high, window_k=window_k
        )
        ablation = AblationConfig(mode=mode, agent_set=agent_set)
        result = run_pipeline(variant, corpus, backend, ablation=ablation)
        _, test = split_dataset(list(corpus.labels.values()), variant.cutoff_year)
        covered = [s for s in test if s.key in result.predictions]
        metrics = compute_metrics(result.predictions, covered) if covered else None
        if metrics is None:
            continue
        rows.append(
            AblationRow(
                mode=mode, agents=ablation.label(),
                alpha=alpha, window_k=window_k, delta=delta, w_high=w_high,
                n_test=len(covered), metrics=metrics,
            )
        )
    return rows


def write_results_csv(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_values())


def write_predictions_csv(
    preds: Mapping[CompanyYearKey, RatingGrade],
    truth: Sequence[LabeledSample],
    path: str | Path,
) -> None:
    truth_by_key = {s.key: s.truth for s in truth}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["company_id", "fiscal_year", "sector", "truth", "predicted"])
        for key in sorted(preds, key=lambda k: (k.company_id, k.fiscal_year)):
            truth_grade = truth_by_key.get(key)
            writer.writerow([
                key.company_id, key.fiscal_year, key.sector,
                truth_grade.value if truth_grade else "", preds[key].value,
            ])


# ---------------------------------------------------------------------------
# Optional loader for the public ratings+ratios dataset
# ---------------------------------------------------------------------------

KAGGLE_GRADE_FOLDING = {
    "AAA": "AAA", "AA": "AA", "A": "A", "BBB": "BBB",
    "BB": "BB", "B": "B", "CCC": "CCC", "CC": "C", "C": "C", "D": "C",
}

_YEAR_RE = re.compile(r"(19|20)\d{2}")


def load_kaggle_ratings(
    path: str | Path,
    rating_col: str = "Rating",
    company_col: str = "Corporation",
    date_col: str = "Rating Date",
    sector_col: str = "Sector",
) -> tuple[list[LabeledSample], list[FinancialVector]]:
    """Map the public corporate-ratings-with-ratios CSV into harness inputs.

    Sub-investment notches beyond the 8-grade scale fold into their
    nearest bucket (CC/C/D -> C). Duplicate company-years keep the first
    row. Every unrecognized numeric column becomes an indicator.
    """
    labels: list[LabeledSample] = []
    financials: list[FinancialVector] = []
    seen: set[tuple[str, int]] = set()
    meta_cols = {rating_col, company_col, date_col, sector_col}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            folded = KAGGLE_GRADE_FOLDING.get((row.get(rating_col) or "").strip().upper())
            year_match = _YEAR_RE.search(row.get(date_col) or "")
            company = (row.get(company_col) or "").strip()
            sector = (row.get(sector_col) or "").strip() or "unknown"
            if not folded or not year_match or not company:
                continue
            year = int(year_match.group(0))
            if (company, year) in seen:
                continue
            seen.add((company, year))
            key = CompanyYearKey(company, year, sector)
            indicators = {}
            for col, cell in row.items():
                if col in meta_cols or cell is None:
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    continue
                indicators[col] = value
            labels.append(LabeledSample(key=key, truth=RatingGrade.parse(folded)))
            financials.append(FinancialVector(key=key, indicators=indicators))
    return labels, financials
