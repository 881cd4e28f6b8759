"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints a single PASS line on success (pytest -s shows them; the
summary hook below prints an overview either way). Runtime budgets are
asserted with time.perf_counter around the exercised work only.
"""
import copy
import json
import math
import random
import socket
import time

import pytest

from creditxai.fra_quant import (
    AdjustmentPolicy,
    DEV_STATUS_OK,
    DEV_STATUS_UNDEFINED_BASELINE,
    DeviationReport,
    FinancialVector,
    IndicatorDeviation,
    IndustryBaselines,
    compute_baselines,
    compute_deviations,
    propose_rating_adjustment,
)
from creditxai.fusion import FusionParams, decide_caa, fuse_cra
from creditxai.harness import (
    AblationGrid,
    LabeledSample,
    MODE_HISTORY,
    MODE_NO_HISTORY,
    compute_metrics,
    run_ablation,
    run_pipeline,
    write_results_csv,
)
from creditxai.history import item_similarity, softmax_weights
from creditxai.ratings import (
    AgentId,
    CompanyYearKey,
    RatingGrade,
    RiskScore,
    RiskSignal,
    grade_to_score,
    score_to_grade,
)
from creditxai.reporting import mask_timestamp
from creditxai.supervision import Stage, load_trace, verify_trace



# ---------------------------------------------------------------------------
# 1. Rating mapping
# ---------------------------------------------------------------------------

def test_rating_mapping_bijection_and_boundaries(acceptance_log):
    budget, t0 = 1.0, time.perf_counter()
    # exhaustive roundtrip bijection
    for grade in RatingGrade:
        assert score_to_grade(grade_to_score(grade)) is grade
    # monotonicity
    scores = [grade_to_score(g).value for g in RatingGrade]
    assert all(a < b for a, b in zip(scores, scores[1:]))
    # boundary grid: bin starts map into the bin, bin ends minus epsilon stay in it
    eps = 1e-9
    for i in range(8):
        lo = i / 8
        assert score_to_grade(RiskScore(lo)).index == i
        hi = (i + 1) / 8 - eps
        assert score_to_grade(RiskScore(hi)).index == i
    assert score_to_grade(RiskScore(1.0)) is RatingGrade.C
    # non-decreasing over a fine grid
    last = -1
    for i in range(10_001):
        idx = score_to_grade(RiskScore(i / 10_000)).index
        assert idx >= last
        last = idx
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("rating-mapping", elapsed, budget)


# ---------------------------------------------------------------------------
# 2. Softmax / cosine suite
# ---------------------------------------------------------------------------

def test_softmax_cosine_suite_10k(acceptance_log):
    budget, t0 = 5.0, time.perf_counter()
    rng = random.Random(20240809)
    for case in range(10_000):
        k = rng.randint(1, 6)
        sims = [(2000 + i, rng.uniform(-1.0, 1.0)) for i in range(k)]
        alpha = rng.uniform(0.0, 12.0)
        weights = softmax_weights(sims, alpha)
        values = [w for _, _, w in weights.per_year]
        assert abs(sum(values) - 1.0) <= 1e-9
        assert all(w > 0 for w in values)
        # shift invariance
        shifted = softmax_weights([(y, s + 0.618) for y, s in sims], alpha)
        for (_, _, a), (_, _, b) in zip(weights.per_year, shifted.per_year):
            assert abs(a - b) <= 1e-9
        # order preservation for alpha > 0
        if alpha > 1e-6:
            pairs = sorted(zip([s for _, s in sims], values))
            for (s1, w1), (s2, w2) in zip(pairs, pairs[1:]):
                if alpha * (s2 - s1) > 1e-9:
                    assert w2 > w1
        # cosine bounds + self-similarity
        vec = [rng.uniform(-3, 3) for _ in range(8)]
        if math.hypot(*vec) > 1e-9:
            other = [x + rng.uniform(-1, 1) for x in vec]
            if math.hypot(*other) > 1e-9:
                assert -1.0 <= item_similarity(vec, other) <= 1.0
            assert abs(item_similarity(vec, vec) - 1.0) <= 1e-12
    # the worked example at alpha = 5
    weights = softmax_weights([(2020, 0.9), (2019, 0.5), (2018, 0.2)], alpha=5.0)
    expected = [0.8580, 0.1161, 0.0259]
    for (_, _, w), e in zip(weights.per_year, expected):
        assert abs(w - e) <= 1e-3
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("softmax-cosine", elapsed, budget)


# ---------------------------------------------------------------------------
# 3. Financial-quant math
# ---------------------------------------------------------------------------

def _sort_oracle_median(values):
    ordered = sorted(values)
    n, mid = len(values), len(values) // 2
    return ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2


def test_fra_math_suite(acceptance_log):
    budget, t0 = 10.0, time.perf_counter()
    rng = random.Random(11235)
    # median vs sort oracle, 1000 random multisets of sizes 1..101
    for _ in range(1000):
        n = rng.randint(1, 101)
        values = [rng.uniform(-100, 100) for _ in range(n)]
        data = [
            FinancialVector(
                key=CompanyYearKey(f"c{i}", 2018, "TECH"), indicators={"x": v}
            )
            for i, v in enumerate(values)
        ]
        result = compute_baselines(data, min_support=1)
        assert abs(result.per_sector["TECH"]["x"] - _sort_oracle_median(values)) <= 1e-9 * max(
            1.0, abs(_sort_oracle_median(values))
        )
    # deviation algebra and zero-baseline guard
    for _ in range(2000):
        baseline = rng.choice([0.0, rng.uniform(-10, 10)])
        value = rng.uniform(-10, 10)
        baselines = IndustryBaselines(
            per_sector={"TECH": {"x": baseline}}, min_support=1,
            dataset_digest="d", period_range=(2018, 2020),
        )
        fin = FinancialVector(key=CompanyYearKey("a", 2021, "TECH"), indicators={"x": value})
        report = compute_deviations(fin, None, baselines)
        entry = report.entry("x")
        if abs(baseline) < 1e-9:
            assert entry.status == DEV_STATUS_UNDEFINED_BASELINE
            assert entry.dev is None  # never a non-finite number
        else:
            assert entry.status == DEV_STATUS_OK
            assert math.isfinite(entry.dev)
            assert abs(entry.dev * baseline + baseline - value) <= 1e-9 * max(1.0, abs(value))
    # adjustment monotonicity: 10,000 direction-aware worsening perturbations
    policy = AdjustmentPolicy(directionality={"a": True, "b": False, "c": True, "d": False})
    keyobj = CompanyYearKey("m", 2021, "TECH")

    def report_for(devs, yoy):
        entries = tuple(
            IndicatorDeviation(k, 1.0, 1.0, v, DEV_STATUS_OK) for k, v in devs.items()
        )
        return DeviationReport(key=keyobj, entries=entries, yoy=yoy)

    for _ in range(10_000):
        devs = {k: rng.uniform(-1.5, 1.5) for k in "abcd"}
        yoy = {k: rng.uniform(-1.0, 1.0) for k in "ab"}
        prev = RatingGrade.from_index(rng.randint(0, 7))
        before, _ = propose_rating_adjustment(prev, report_for(devs, yoy), policy)
        victim = rng.choice("abcd")
        sign = 1.0 if policy.higher_is_better(victim) else -1.0
        worsened = dict(devs)
        worsened[victim] -= sign * rng.uniform(0.0, 1.0)
        after, _ = propose_rating_adjustment(prev, report_for(worsened, yoy), policy)
        assert after <= before
        assert 0 <= prev.index - after <= 7
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("fra-math", elapsed, budget)


# ---------------------------------------------------------------------------
# 4. Fusion suite
# ---------------------------------------------------------------------------

def test_fusion_suite_exhaustive_grid(acceptance_log):
    budget, t0 = 5.0, time.perf_counter()
    params = FusionParams(delta=0.15, w_high=0.7, w_base=0.5)
    for i in range(101):
        for j in range(101):
            a, b = i / 100, j / 100
            signal, (w_bra, w_fra) = fuse_cra(RiskScore(a), RiskScore(b), params)
            # branch oracle: strict inequality on the same floats
            expected_w = params.w_high if abs(a - b) > params.delta else params.w_base
            assert w_bra == expected_w and w_fra == 1.0 - expected_w
            expected_score = expected_w * a + (1 - expected_w) * b
            assert signal.score.value == expected_score
            assert min(a, b) - 1e-12 <= signal.score.value <= max(a, b) + 1e-12

    def sig(agent, value):
        s = RiskScore(value)
        return RiskSignal(agent_id=agent, grade=score_to_grade(s), score=s,
                          rationale="r", inputs_digest="d")

    rng = random.Random(77)
    for _ in range(2000):
        values = [rng.random() for _ in range(4)]
        decision = decide_caa({
            AgentId.BRA: sig(AgentId.BRA, values[0]),
            AgentId.FRA: sig(AgentId.FRA, values[1]),
            AgentId.GRA: sig(AgentId.GRA, values[2]),
            AgentId.CRA: sig(AgentId.CRA, values[3]),
        })
        assert min(values) - 1e-12 <= decision.score.value <= max(values) + 1e-12
        assert 0.0 <= decision.consensus <= 1.0
        if max(values) - min(values) < 1e-15:
            assert decision.consensus == pytest.approx(1.0, abs=1e-12)
    # the worked example reproduces exactly
    signal, _ = fuse_cra(RiskScore(0.2), RiskScore(0.8), params)
    assert signal.score.value == 0.7 * 0.2 + 0.3 * 0.8 == 0.38
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("fusion", elapsed, budget)


# ---------------------------------------------------------------------------
# 5. End-to-end determinism (offline)
# ---------------------------------------------------------------------------

@pytest.fixture
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted during offline acceptance run")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


def _masked_json(path):
    data = json.loads(path.read_text())
    data.pop("generated_at", None)
    return data


def test_end_to_end_determinism(fixture_config, fixture_corpus, mock_backend, tmp_path, no_network, acceptance_log):
    budget, t0 = 60.0, time.perf_counter()
    grid = AblationGrid(
        modes=(MODE_HISTORY,),
        agent_sets=(frozenset({AgentId.BRA, AgentId.FRA, AgentId.GRA, AgentId.CRA, AgentId.CAA}),),
    )
    artifacts = {}
    for run in ("one", "two"):
        out = tmp_path / run
        out.mkdir()
        result = run_pipeline(
            fixture_config, fixture_corpus, mock_backend,
            out_dir=out / "reports", trace_path=out / "trace.jsonl", run_id=run,
        )
        assert not result.partial
        rows = run_ablation(grid, fixture_corpus, fixture_config, mock_backend)
        write_results_csv(rows, out / "results.csv")
        reports = {
            p.name: _masked_json(p) for p in sorted((out / "reports").glob("*.json"))
        }
        markdowns = {
            p.name: mask_timestamp(p.read_text())
            for p in sorted((out / "reports").glob("*.md"))
        }
        events = load_trace(out / "trace.jsonl")
        artifacts[run] = {
            "results": (out / "results.csv").read_text(),
            "reports": reports,
            "markdowns": markdowns,
            "trace_len": len(events),
            "verify": verify_trace(events, list(result.predictions)).ok,
        }
    assert artifacts["one"]["results"] == artifacts["two"]["results"]
    assert artifacts["one"]["reports"] == artifacts["two"]["reports"]
    assert artifacts["one"]["markdowns"] == artifacts["two"]["markdowns"]
    assert len(artifacts["one"]["reports"]) == 3
    assert artifacts["one"]["trace_len"] == artifacts["two"]["trace_len"] == 11 * 3
    assert artifacts["one"]["verify"] and artifacts["two"]["verify"]
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("e2e-determinism", elapsed, budget)


# ---------------------------------------------------------------------------
# 6. Metrics
# ---------------------------------------------------------------------------

def test_metrics_against_bruteforce_and_hand_example(acceptance_log):
    budget, t0 = 10.0, time.perf_counter()
    rng = random.Random(31415)
    for _ in range(100):
        n = rng.randint(1, 500)
        truth = [
            LabeledSample(
                key=CompanyYearKey(f"c{i}", 2020, "S"),
                truth=rng.choice(list(RatingGrade)),
            )
            for i in range(n)
        ]
        preds = {s.key: rng.choice(list(RatingGrade)) for s in truth}
        report = compute_metrics(preds, truth)
        correct = sum(1 for s in truth if preds[s.key] is s.truth)
        assert abs(report.overall_accuracy - correct / n) <= 1e-12
        recount_recall = 0.0
        recount_f1 = 0.0
        total_support = 0
        for grade in RatingGrade:
            support = sum(1 for s in truth if s.truth is grade)
            if not support:
                continue
            tp = sum(1 for s in truth if s.truth is grade and preds[s.key] is grade)
            predicted = sum(1 for s in truth if preds[s.key] is grade)
            precision = tp / predicted if predicted else 0.0
            recall = tp / support
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            recount_recall += recall * support
            recount_f1 += f1 * support
            total_support += support
        assert abs(report.weighted_recall - recount_recall / total_support) <= 1e-12
        assert abs(report.weighted_f1 - recount_f1 / total_support) <= 1e-12
    # the hand-worked 4-sample example
    truth = [
        LabeledSample(CompanyYearKey("c1", 2020, "S"), RatingGrade.A),
        LabeledSample(CompanyYearKey("c2", 2020, "S"), RatingGrade.A),
        LabeledSample(CompanyYearKey("c3", 2020, "S"), RatingGrade.B),
        LabeledSample(CompanyYearKey("c4", 2020, "S"), RatingGrade.BBB),
    ]
    preds = {
        truth[0].key: RatingGrade.A,
        truth[1].key: RatingGrade.B,
        truth[2].key: RatingGrade.B,
        truth[3].key: RatingGrade.BBB,
    }
    assert compute_metrics(preds, truth).overall_accuracy == 0.75
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("metrics", elapsed, budget)


# ---------------------------------------------------------------------------
# 7. Directional ablation
# ---------------------------------------------------------------------------

def test_directional_ablation(fixture_config, fixture_corpus, mock_backend, acceptance_log):
    budget, t0 = 60.0, time.perf_counter()
    grid = AblationGrid.from_dict(
        json.loads((fixture_corpus.root / "grid.json").read_text())
    )
    rows = run_ablation(grid, fixture_corpus, fixture_config, mock_backend)
    accuracy = {(r.mode, r.agents): r.metrics.overall_accuracy for r in rows}
    for agents in ("BRA", "FRA", "GRA", "BRA+FRA+CRA", "BRA+FRA+GRA+CRA+CAA"):
        assert accuracy[(MODE_HISTORY, agents)] >= accuracy[(MODE_NO_HISTORY, agents)], agents
    caa = accuracy[(MODE_HISTORY, "BRA+FRA+GRA+CRA+CAA")]
    best_single = max(accuracy[(MODE_HISTORY, a)] for a in ("BRA", "FRA", "GRA"))
    assert caa >= best_single
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("directional-ablation", elapsed, budget)


# ---------------------------------------------------------------------------
# 8. Leakage guard
# ---------------------------------------------------------------------------

def test_leakage_guard(fixture_config, fixture_corpus, mock_backend, acceptance_log):
    budget, t0 = 60.0, time.perf_counter()
    poisoned = copy.deepcopy(fixture_corpus)
    victim = ("gamma_energy", 2021)
    fin = poisoned.financials[victim]
    poisoned.financials[victim] = FinancialVector(
        key=fin.key, indicators={**fin.indicators, "operating_margin": -8.8e8}
    )
    cutoff = fixture_config.cutoff_year

    def reference_rows(corpus):
        return [
            corpus.financials[(s.key.company_id, s.key.fiscal_year)]
            for s in corpus.labels.values()
            if s.key.fiscal_year < cutoff
        ]

    clean = compute_baselines(reference_rows(fixture_corpus), min_support=3)
    dirty = compute_baselines(reference_rows(poisoned), min_support=3)
    assert clean.as_dict() == dirty.as_dict()

    key = CompanyYearKey("gamma_energy", 2021, "ENER")
    runs = {
        name: run_pipeline(fixture_config, corpus, mock_backend, run_id=name)
        for name, corpus in (("clean", fixture_corpus), ("dirty", poisoned))
    }
    digests = {
        name: {
            e.stage: e.outputs_digest
            for e in run.trace_events
            if e.key == key and e.stage in (Stage.HISTORY, Stage.FRA_QUANT)
        }
        for name, run in runs.items()
    }
    assert digests["clean"][Stage.HISTORY] == digests["dirty"][Stage.HISTORY]
    assert digests["clean"][Stage.FRA_QUANT] != digests["dirty"][Stage.FRA_QUANT]
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    acceptance_log("leakage-guard", elapsed, budget)
