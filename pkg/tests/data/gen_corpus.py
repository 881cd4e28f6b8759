"""Regenerate the desk-scale fixture corpus under tests/data/corpus/.

Three companies, three sectors, four years (2018-2021), cutoff 2021:
nine reference company-years and three test keys. The mock rule table
keys on prompt content that only appears in history mode ("WEIGHTED
HISTORY" for text agents, "Prior grade:" for the financial agent), so
history-mode runs hit the designed verdicts while no-history runs fall
back to hash verdicts.

Designed history-mode outcomes (truths: alpha A, beta BB, gamma CCC):
  BRA  : alpha A |: beta BB  | gamma B    -> 2/3
  FRA  : alpha BBB | beta BB | gamma CCC  -> 2/3
  GRA  : alpha A | beta BBB  | gamma CCC  -> 2/3
  CRA  : alpha BBB | beta BB | gamma CCC  -> 2/3
  CAA  : alpha A | beta BB   | gamma CCC  -> 3/3

Run:  python3 tests/data/gen_corpus.py
"""
from __future__ import annotations

import json
from pathlib import Path

from creditxai.features import (
    FeatureStore,
    HashFeatureProvider,
    get_or_compute,
    save_store,
)
from creditxai.filings import FilingDocument, parse_filing, select_key_items, strip_markup
from creditxai.harness import key_from_filename
from creditxai.config import config_from_dict

ROOT = Path(__file__).parent / "corpus"

YEARS = (2018, 2019, 2020, 2021)

COMPANIES = {
    "alpha_mfg": "MFG",
    "beta_tech": "TECH",
    "gamma_energy": "ENER",
}

LABELS = {
    ("alpha_mfg", 2018): "A",
    ("alpha_mfg", 2019): "A",
    ("alpha_mfg", 2020): "A",
    ("alpha_mfg", 2021): "A",
    ("beta_tech", 2018): "BBB",
    ("beta_tech", 2019): "BB",
    ("beta_tech", 2020): "BB",
    ("beta_tech", 2021): "BB",
    ("gamma_energy", 2018): "B",
    ("gamma_energy", 2019): "B",
    ("gamma_energy", 2020): "B",
    ("gamma_energy", 2021): "CCC",
}

# indicators: current_ratio (higher better), debt_to_equity (lower better),
# operating_margin (higher better), interest_coverage (higher better).
# Reference medians sit so that 2021 deviations give proposal deltas
# alpha 0, beta 0, gamma -1 (one minor operating_margin breach).
FINANCIALS = {
    ("alpha_mfg", 2018): (1.9, 0.52, 0.14, 7.8),
    ("alpha_mfg", 2019): (2.0, 0.50, 0.15, 8.0),
    ("alpha_mfg", 2020): (2.1, 0.48, 0.16, 8.2),
    ("alpha_mfg", 2021): (2.0, 0.50, 0.15, 8.0),
    ("beta_tech", 2018): (2.4, 0.85, 0.095, 4.9),
    ("beta_tech", 2019): (2.5, 0.80, 0.100, 5.0),
    ("beta_tech", 2020): (2.6, 0.78, 0.105, 5.1),
    ("beta_tech", 2021): (2.45, 0.82, 0.098, 4.95),
    ("gamma_energy", 2018): (1.30, 1.10, 0.110, 3.2),
    ("gamma_energy", 2019): (1.25, 1.20, 0.100, 3.0),
    ("gamma_energy", 2020): (1.20, 1.30, 0.090, 2.8),
    ("gamma_energy", 2021): (1.10, 1.45, 0.065, 2.6),
}

INDICATOR_COLS = ("current_ratio", "debt_to_equity", "operating_margin", "interest_coverage")

_BUSINESS_BASE = {
    "alpha_mfg": (
        "The company designs and manufactures precision industrial components for "
        "aerospace and automotive customers across three continents. Long term supply "
        "agreements with diversified customers support stable recurring revenue, and "
        "the installed base generates steady aftermarket demand for spare parts."
    ),
    "beta_tech": (
        "The company operates a subscription software platform for logistics and "
        "fleet management with usage based pricing. Net revenue retention remained "
        "above one hundred percent and the platform processes millions of shipments "
        "daily for enterprise customers under multi year contracts."
    ),
    "gamma_energy": (
        "The company explores, develops and produces oil and natural gas properties "
        "concentrated in two onshore basins. Production volumes depend on commodity "
        "prices, drilling results and takeaway capacity, and the reserve base requires "
        "continuous capital investment to offset natural decline."
    ),
}

_RISK_BASE = {
    "alpha_mfg": (
        "Demand for industrial components follows capital spending cycles and a "
        "downturn could reduce order volumes. Raw material cost inflation, customer "
        "concentration in the aerospace segment and tariff exposure remain the "
        "principal uncertainties management monitors each quarter."
    ),
    "beta_tech": (
        "Competition in logistics software is intense and pricing pressure could slow "
        "growth. The business depends on cloud infrastructure providers, faces data "
        "privacy regulation across jurisdictions, and must keep renewing enterprise "
        "subscriptions to sustain its revenue base."
    ),
    "gamma_energy": (
        "Commodity price volatility directly affects cash flow and reserve values. "
        "The company carries substantial indebtedness, faces environmental regulation "
        "of drilling operations, and hedging covers only a portion of expected "
        "production over the next twelve months."
    ),
}

_MDA_BASE = {
    "alpha_mfg": (
        "Management discussion of results covers segment revenue, backlog conversion "
        "and operating margins. Cash generated from operations funded capital "
        "expenditure and dividends without incremental borrowing, and liquidity "
        "remains ample under the revolving credit facility."
    ),
    "beta_tech": (
        "Management reviews annual recurring revenue, gross retention and operating "
        "leverage. Subscription growth offset higher hosting costs, while sales "
        "efficiency improved as the direct channel matured across enterprise "
        "accounts in North America and Europe."
    ),
    "gamma_energy": (
        "Management discusses realized prices, lease operating expense and capital "
        "allocation between drilling and debt service. Borrowing base availability "
        "and covenant headroom frame the liquidity outlook for the coming fiscal "
        "year under the reserve based lending facility."
    ),
}

_MARKET_BASE = {
    "alpha_mfg": (
        "Quantitative and qualitative market risk disclosures cover foreign currency "
        "exposure from European operations and interest rate exposure on the term "
        "loan. A hypothetical ten percent currency move would not materially change "
        "consolidated results of operations."
    ),
    "beta_tech": (
        "Market risk arises primarily from interest rates on the convertible notes "
        "and foreign currency from international subscriptions. The treasury policy "
        "restricts investments to short duration instruments held to maturity."
    ),
    "gamma_energy": (
        "Commodity derivative positions hedge a portion of forecast production using "
        "swaps and collars. Interest rate exposure on the credit facility floats with "
        "the benchmark and a one hundred basis point increase would raise annual "
        "interest expense."
    ),
}

_GOV_BASE = {
    "alpha_mfg": (
        "The board of directors comprises nine members, seven of whom are independent "
        "under exchange listing standards. Committee charters cover audit, "
        "compensation and governance responsibilities with annual self evaluations "
        "and a separated chair and chief executive."
    ),
    "beta_tech": (
        "Directors and executive officers are listed with their qualifications. The "
        "dual class share structure concentrates voting control with the founders "
        "while the audit committee consists entirely of independent directors with "
        "financial expertise."
    ),
    "gamma_energy": (
        "The governance section describes board oversight of commodity risk and "
        "environmental compliance. Related party transactions with the founding "
        "family partnership are reviewed by the audit committee under a written "
        "policy adopted by the board."
    ),
}

_COMP_BASE = {
    "alpha_mfg": (
        "Executive compensation combines base salary, an annual cash incentive tied "
        "to operating income and return on invested capital, and long term equity "
        "awards vesting over three years. Clawback provisions apply to all incentive "
        "payments in case of restatement."
    ),
    "beta_tech": (
        "Compensation emphasizes equity with performance stock units tied to revenue "
        "growth and free cash flow margin. The compensation committee uses an "
        "independent consultant and caps annual incentive payouts at two times "
        "target."
    ),
    "gamma_energy": (
        "Compensation includes base salary, annual incentives tied to production, "
        "costs and safety metrics, and restricted stock. The committee reviews peer "
        "benchmarking annually and requires executives to hold shares equal to a "
        "multiple of salary."
    ),
}

_CONTROLS_BASE = {
    "alpha_mfg": (
        "Management assessed the effectiveness of internal control over financial "
        "reporting using the COSO framework and concluded controls were effective. "
        "The independent registered public accounting firm issued an unqualified "
        "attestation report on internal control."
    ),
    "beta_tech": (
        "Based on the evaluation, the chief executive and chief financial officer "
        "concluded disclosure controls and procedures were effective at the "
        "reasonable assurance level. No change in internal control materially "
        "affected reporting during the fourth quarter."
    ),
    "gamma_energy": (
        "Management concluded internal control over financial reporting was "
        "effective. Remediation of the prior year deficiency in commodity contract "
        "valuation was completed during the second quarter and retested by the "
        "internal audit function."
    ),
}

_LEGAL_BASE = {
    "alpha_mfg": (
        "The company is party to ordinary course commercial disputes and product "
        "warranty claims. Management believes the resolution of pending matters will "
        "not have a material adverse effect on the consolidated financial position "
        "or results of operations."
    ),
    "beta_tech": (
        "A patent infringement claim filed by a competitor was settled without "
        "material payment. Other proceedings arising in the ordinary course of "
        "business are not expected to be material to the financial statements taken "
        "as a whole."
    ),
    "gamma_energy": (
        "The company faces royalty underpayment litigation in one operating basin "
        "and routine regulatory proceedings. Accrued liabilities include estimated "
        "settlements where losses are probable and reasonably estimable under the "
        "accounting standards."
    ),
}

_OWNERSHIP_BASE = {
    "alpha_mfg": (
        "Security ownership tables disclose beneficial holders of more than five "
        "percent, director and officer holdings, and equity compensation plan "
        "information. Institutional investors hold the majority of outstanding "
        "common shares."
    ),
    "beta_tech": (
        "Certain relationships and related transactions include commercial "
        "agreements with an affiliate of a director, reviewed and approved under the "
        "related person transaction policy by disinterested members of the audit "
        "committee."
    ),
    "gamma_energy": (
        "The founding family partnership controls a significant voting block and "
        "two board seats under a shareholders agreement. Registration rights cover "
        "the partnership shares and pipeline transportation agreements with an "
        "affiliate are disclosed."
    ),
}

_YEAR_FLAVOR = {
    2018: "Results reflected steady execution with modest growth in core markets and disciplined cost control.",
    2019: "The year brought incremental expansion, improved efficiency and favorable momentum in key accounts.",
    2020: "Conditions were mixed; management emphasized resilience, cost discipline and targeted investment.",
    2021: "The current year disclosure updates strategy, capital allocation and the principal risks in detail.",
}

_GAMMA_2021_OVERRIDES = {
    "1A": (
        "Sustained price weakness produced a decline in realized revenue and an "
        "impairment of proved properties. Covenant headroom narrowed and the "
        "borrowing base was reduced, creating uncertainty about liquidity if the "
        "downturn persists. Deterioration in rig availability and a delinquent "
        "joint venture partner compound the risks described above."
    ),
    "7": (
        "Management discussion reports a loss for the year driven by weaker realized "
        "prices and higher lease operating expense. The decline in operating margin "
        "and reduced interest coverage led to a covenant amendment, and capital "
        "spending was cut to preserve liquidity while the borrowing base shortfall "
        "is addressed."
    ),
}


def _item_text(company: str, item_id: str, year: int) -> str:
    base = {
        "1": _BUSINESS_BASE,
        "1A": _RISK_BASE,
        "3": _LEGAL_BASE,
        "7": _MDA_BASE,
        "7A": _MARKET_BASE,
        "9A": _CONTROLS_BASE,
        "10": _GOV_BASE,
        "11": _COMP_BASE,
        "13": _OWNERSHIP_BASE,
    }[item_id][company]
    if company == "gamma_energy" and year == 2021 and item_id in _GAMMA_2021_OVERRIDES:
        base = _GAMMA_2021_OVERRIDES[item_id]
    return f"{base} {_YEAR_FLAVOR[year]} Fiscal {year} disclosures follow."


_ITEM_TITLES = {
    "1": "Business",
    "1A": "Risk Factors",
    "3": "Legal Proceedings",
    "7": "Management's Discussion and Analysis",
    "7A": "Quantitative and Qualitative Disclosures About Market Risk",
    "9A": "Controls and Procedures",
    "10": "Directors, Executive Officers and Corporate Governance",
    "11": "Executive Compensation",
    "13": "Certain Relationships and Related Transactions",
}


def _filing_text(company: str, year: int) -> str:
    parts = [f"ANNUAL REPORT FISCAL {year}", ""]
    for item_id in ("1", "1A", "3", "7", "7A", "9A", "10", "11", "13"):
        parts.append(f"Item {item_id}. {_ITEM_TITLES[item_id]}")
        parts.append(_item_text(company, item_id, year))
        parts.append("")
    return "\n".join(parts)


def _grade_verdict(grade: str, score: float, rationale: str, adjustment: int | None = None) -> str:
    body = {"grade": grade, "score": score, "rationale": rationale}
    if adjustment is not None:
        body["adjustment"] = adjustment
    return "```json\n" + json.dumps(body) + "\n```"


MOCK_RULES = [
    # Text agents hit only when the weighted-history block is present.
    {"pattern": r"(?s)AGENT: BRA.*Company: alpha_mfg.*WEIGHTED HISTORY",
     "response": _grade_verdict("A", 0.3125, "Diversified backlog and stable aftermarket demand track prior years.")},
    {"pattern": r"(?s)AGENT: BRA.*Company: beta_tech.*WEIGHTED HISTORY",
     "response": _grade_verdict("BB", 0.5625, "Retention holds but pricing pressure persists, consistent with the weighted prior years.")},
    {"pattern": r"(?s)AGENT: BRA.*Company: gamma_energy.*WEIGHTED HISTORY",
     "response": _grade_verdict("B", 0.6875, "Commodity exposure in line with historical disclosures despite weaker tone.")},
    {"pattern": r"(?s)AGENT: GRA.*Company: alpha_mfg.*WEIGHTED HISTORY",
     "response": _grade_verdict("A", 0.3125, "Independent board and clean attestations mirror prior years.")},
    {"pattern": r"(?s)AGENT: GRA.*Company: beta_tech.*WEIGHTED HISTORY",
     "response": _grade_verdict("BBB", 0.4375, "Dual class control tempers otherwise solid governance signals.")},
    {"pattern": r"(?s)AGENT: GRA.*Company: gamma_energy.*WEIGHTED HISTORY",
     "response": _grade_verdict("CCC", 0.8125, "Related party pipeline agreements and family control raise governance risk in a stressed year.")},
    # FRA hits only when a prior grade anchors the proposal.
    {"pattern": r"(?s)AGENT: FRA.*Company: alpha_mfg.*Prior grade:",
     "response": _grade_verdict("BBB", 0.4375, "Indicators on baseline but coverage cushion is thinner than the grade implies.")},
    {"pattern": r"(?s)AGENT: FRA.*Company: beta_tech.*Prior grade:",
     "response": _grade_verdict("BB", 0.5625, "Deviation profile confirms the quantitative proposal.")},
    {"pattern": r"(?s)AGENT: FRA.*Company: gamma_energy.*Prior grade:",
     "response": _grade_verdict("CCC", 0.8125, "Margin breach and leverage trend support the proposed downgrade.")},
    # Composite-feedback adjustments.
    {"pattern": r"(?s)AGENT: GRA-ADJUST.*Company: alpha_mfg",
     "response": _grade_verdict("A", 0.3125, "Governance strength supports one notch above the composite.", adjustment=1)},
    {"pattern": r"(?s)AGENT: GRA-ADJUST.*Company: beta_tech",
     "response": _grade_verdict("BBB", 0.4375, "No governance basis to move the composite.", adjustment=0)},
    {"pattern": r"(?s)AGENT: GRA-ADJUST.*Company: gamma_energy",
     "response": _grade_verdict("CCC", 0.8125, "Composite already reflects governance stress.", adjustment=0)},
]

CONFIG = {
    "alpha": 5.0,
    "window_k": 3,
    "delta": 0.15,
    "w_high": 0.7,
    "w_base": 0.5,
    "vector_choice": "finance",
    "features": {"finance_dim": 64, "general_dim": 32, "chunk_chars": 4000,
                 "store": "features.jsonl", "provider": "synthetic"},
    "fra_policy": {
        "dev_minor": 0.25, "dev_major": 0.75, "yoy_major": 0.40,
        "max_notches": 2, "min_support": 3,
        "directionality": {
            "current_ratio": True, "debt_to_equity": False,
            "operating_margin": True, "interest_coverage": True,
        },
    },
    "caa": {"mode": "deterministic",
            "weights": {"CRA": 0.5, "GRA": 0.3, "BRA": 0.1, "FRA": 0.1}},
    "backend": {"type": "mock", "temperature": 0.0, "seed": 20240809,
                "rules_file": "mock_rules.json"},
    "split": {"cutoff_year": 2021},
    "workers": 2,
}

GRID = {
    "modes": ["history", "no_history"],
    "agent_sets": [["BRA"], ["FRA"], ["GRA"], ["BRA", "FRA", "CRA"],
                   ["BRA", "FRA", "GRA", "CRA", "CAA"]],
}


def main() -> None:
    ROOT.mkdir(parents=True, exist_ok=True)
    filings_dir = ROOT / "filings"
    filings_dir.mkdir(exist_ok=True)

    for (company, sector) in COMPANIES.items():
        for year in YEARS:
            (filings_dir / f"{company}_{year}_{sector}.txt").write_text(
                _filing_text(company, year)
            )

    with open(ROOT / "labels.csv", "w") as fh:
        fh.write("company_id,fiscal_year,sector,rating\n")
        for (company, year), rating in sorted(LABELS.items()):
            fh.write(f"{company},{year},{COMPANIES[company]},{rating}\n")

    with open(ROOT / "financials.csv", "w") as fh:
        fh.write("company_id,fiscal_year,sector," + ",".join(INDICATOR_COLS) + "\n")
        for (company, year), values in sorted(FINANCIALS.items()):
            row = ",".join(str(v) for v in values)
            fh.write(f"{company},{year},{COMPANIES[company]},{row}\n")

    (ROOT / "mock_rules.json").write_text(
        json.dumps({"seed": CONFIG["backend"]["seed"], "rules": MOCK_RULES}, indent=2) + "\n"
    )
    (ROOT / "config.json").write_text(json.dumps(CONFIG, indent=2) + "\n")
    (ROOT / "grid.json").write_text(json.dumps(GRID, indent=2) + "\n")

    config = config_from_dict(CONFIG)
    provider = HashFeatureProvider(
        config.features.finance_dim, config.features.general_dim
    )
    store = FeatureStore()
    for path in sorted(filings_dir.glob("*.txt")):
        key = key_from_filename(path.name)
        doc = FilingDocument(key=key, source_uri=str(path), raw_text=strip_markup(path.read_text()))
        items = parse_filing(doc, config.min_body_chars)
        selected, _ = select_key_items(items, config.item_set)
        for item_id, item in sorted(selected.items()):
            if item.stub:
                continue
            get_or_compute(
                store, key, item, provider,
                config.features.finance_dim, config.features.general_dim,
                config.features.chunk_chars,
            )
    save_store(store, ROOT / "features.jsonl")
    print(f"corpus written under {ROOT} ({len(store)} feature records)")
    _freeze_goldens()


def _freeze_goldens() -> None:
    """Run the full pipeline once and freeze its verified outputs."""
    import dataclasses
    import tempfile

    from creditxai.harness import (
        build_backend,
        load_corpus,
        run_pipeline,
        split_dataset,
        write_predictions_csv,
    )
    from creditxai.reporting import mask_timestamp

    golden = ROOT.parent.parent / "golden"
    golden.mkdir(exist_ok=True)
    config = config_from_dict(CONFIG)
    config = dataclasses.replace(
        config,
        backend=dataclasses.replace(config.backend, rules_file=str(ROOT / "mock_rules.json")),
    )
    corpus = load_corpus(ROOT, store_name=config.features.store)
    backend = build_backend(config)
    with tempfile.TemporaryDirectory() as tmp:
        result = run_pipeline(config, corpus, backend, out_dir=tmp, run_id="golden")
        assert not result.partial, [o.error for o in result.outcomes.values() if o.error]
        _, test = split_dataset(list(corpus.labels.values()), config.cutoff_year)
        write_predictions_csv(result.predictions, test, golden / "predictions_full_history.csv")
        report_md = (Path(tmp) / "alpha_mfg_2021.md").read_text()
        (golden / "report_alpha_mfg_2021.md").write_text(mask_timestamp(report_md))
    print(f"goldens written under {golden}")


if __name__ == "__main__":
    main()
