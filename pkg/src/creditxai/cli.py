"""Command-line entry points for the rating pipeline."""
from __future__ import annotations

import dataclasses
import json
import sys
import time
from pathlib import Path

import click

from .config import load_config
from .errors import ProviderUnavailable
from .features import (
    FeatureStore,
    HashFeatureProvider,
    HttpFeatureProvider,
    get_or_compute,
    load_store,
    save_store,
)
from .filings import FilingItem, parse_filing, select_key_items, DEFAULT_KEY_ITEMS
from .fra_quant import compute_baselines, load_financials_csv, save_baselines
from .harness import (
    AblationConfig,
    AblationGrid,
    MODE_HISTORY,
    MODE_NO_HISTORY,
    build_backend,
    compute_metrics,
    load_corpus,
    key_from_filename,
    run_ablation,
    run_pipeline,
    split_dataset,
    write_predictions_csv,
    write_results_csv,
    AblationRow,
    FULL_AGENT_SET,
)
from .ratings import AgentId, CompanyYearKey
from .reporting import report_from_json_dict, write_report
from .supervision import ALL_STAGES, Stage, load_trace, verify_trace
from .filings import FilingDocument, strip_markup


@click.group()
def main():
    """Multi-agent corporate credit rating pipeline."""


@main.command()
@click.option("--filings", "filings_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--min-body-chars", default=200, show_default=True)
@click.option("--items", "item_filter", default="", help="Comma-separated item ids; default = the 14 key items.")
def ingest(filings_dir: str, out_path: str, min_body_chars: int, item_filter: str):
    """Parse raw 10-K text files into a per-item JSONL."""
    wanted = frozenset(item_filter.split(",")) if item_filter else DEFAULT_KEY_ITEMS
    records = []
    for path in sorted(Path(filings_dir).glob("*.txt")):
        key = key_from_filename(path.name)
        doc = FilingDocument(key=key, source_uri=str(path), raw_text=strip_markup(path.read_text()))
        items = parse_filing(doc, min_body_chars)
        selected, missing = select_key_items(items, wanted)
        if missing:
            click.echo(f"{path.name}: missing items {sorted(missing)}", err=True)
        for item_id in sorted(selected):
            item = selected[item_id]
            records.append(
                {
                    **key.as_dict(),
                    "item_id": item.item_id,
                    "title": item.title,
                    "body": item.body,
                    "stub": item.stub,
                }
            )
    with open(out_path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    click.echo(f"wrote {len(records)} item records to {out_path}")


class _RefusingProvider:
    """Provider for fixture-only runs: every miss is an error."""

    provider_id = "fixture-only"

    def embed_finance(self, texts):
        raise ProviderUnavailable("item not covered by the fixture store")

    embed_general = embed_finance
    sentiment = embed_finance


@main.command()
@click.option("--items", "items_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--provider", "provider_url", default="", help="Embedding sidecar base URL.")
@click.option("--fixtures", "fixtures_path", default="", type=click.Path(), help="Existing feature store to replay.")
@click.option("--synthetic", is_flag=True, help="Use the deterministic offline featurizer.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--finance-dim", default=768, show_default=True)
@click.option("--general-dim", default=384, show_default=True)
def features(items_path, provider_url, fixtures_path, synthetic, out_path, finance_dim, general_dim):
    """Compute (or replay) hybrid features for every item record."""
    store = load_store(fixtures_path) if fixtures_path else FeatureStore()
    if provider_url:
        provider = HttpFeatureProvider(provider_url)
    elif synthetic:
        provider = HashFeatureProvider(finance_dim, general_dim)
    elif fixtures_path:
        provider = _RefusingProvider()
    else:
        raise click.UsageError("pick a source: --provider URL, --fixtures FILE, or --synthetic")
    out_store = FeatureStore()
    count = 0
    with open(items_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("stub"):
                continue
            key = CompanyYearKey.from_dict(record)
            item = FilingItem(
                item_id=record["item_id"],
                title=record.get("title", ""),
                body=record["body"],
                char_span=(0, len(record["body"])),
            )
            get_or_compute(store, key, item, provider, finance_dim, general_dim)
            out_store.put(store.get(key, item.item_id))
            count += 1
    save_store(out_store, out_path)
    click.echo(f"wrote {count} feature records to {out_path}")


@main.command()
@click.option("--financials", "financials_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--min-support", default=5, show_default=True)
@click.option("--max-year", default=None, type=int, help="Exclusive year cutoff (leakage guard).")
def baselines(financials_path, out_path, min_support, max_year):
    """Compute per-sector median baselines from a financials CSV."""
    rows = load_financials_csv(financials_path)
    if max_year is not None:
        rows = [r for r in rows if r.key.fiscal_year < max_year]
    result = compute_baselines(rows, min_support=min_support)
    save_baselines(result, out_path)
    click.echo(
        f"baselines for {len(result.per_sector)} sector cells "
        f"(periods {result.period_range[0]}-{result.period_range[1]}) -> {out_path}"
    )


@main.command()
@click.option("--decision", "decision_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def report(decision_path, out_dir):
    """Render a rating report from a decision JSON bundle."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    bundle = json.loads(Path(decision_path).read_text())
    rendered = report_from_json_dict(bundle)
    md_path, json_path = write_report(rendered, out_dir)
    click.echo(f"wrote {md_path} and {json_path}")


@main.group()
def trace():
    """Trace-file operations."""


@trace.command()
@click.option("--file", "trace_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stages", default="", help="Comma-separated expected stages; default = all 11.")
def verify(trace_file, stages):
    """Verify stage completeness and ordering for every key in a trace."""
    events = load_trace(trace_file)
    expected_stages = (
        tuple(Stage(s) for s in stages.split(",")) if stages else ALL_STAGES
    )
    keys = sorted({e.key for e in events}, key=lambda k: (k.company_id, k.fiscal_year))
    result = verify_trace(events, keys, expected_stages)
    click.echo(f"{result.events_seen} events, {result.keys_checked} keys")
    for violation in result.violations:
        click.echo(f"VIOLATION [{violation.kind}] {violation.key}: {violation.detail}")
    if not result.ok:
        sys.exit(1)
    click.echo("trace OK")


def _parse_agents(agents_text: str) -> frozenset[AgentId]:
    if not agents_text:
        return FULL_AGENT_SET
    return frozenset(AgentId(a.strip().upper()) for a in agents_text.split("+"))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--backend", "backend_type", type=click.Choice(["mock", "http"]), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice([MODE_HISTORY, MODE_NO_HISTORY]), default=MODE_HISTORY)
@click.option("--agents", "agents_text", default="", help='Agent subset, e.g. "BRA+FRA+CRA".')
@click.option("--reports-dir", default="", type=click.Path(file_okay=False))
@click.option("--trace-out", default="", type=click.Path(dir_okay=False))
@click.option("--predictions-out", default="", type=click.Path(dir_okay=False))
def evaluate(config_path, corpus_dir, backend_type, out_path, mode, agents_text,
             reports_dir, trace_out, predictions_out):
    """Run the pipeline over the corpus test split and write a results CSV."""
    config = load_config(config_path)
    if backend_type:
        config = dataclasses.replace(
            config, backend=dataclasses.replace(config.backend, type=backend_type)
        )
    if config.backend.rules_file and not Path(config.backend.rules_file).is_absolute():
        config = dataclasses.replace(
            config,
            backend=dataclasses.replace(
                config.backend, rules_file=str(Path(corpus_dir) / config.backend.rules_file)
            ),
        )
    corpus = load_corpus(corpus_dir, store_name=config.features.store)
    backend = build_backend(config)
    ablation = AblationConfig(mode=mode, agent_set=_parse_agents(agents_text))
    run_id = f"run-{int(time.time())}"
    trace_path = Path(trace_out) if trace_out else Path(out_path).parent / f"trace_{run_id}.jsonl"
    result = run_pipeline(
        config, corpus, backend,
        ablation=ablation,
        out_dir=reports_dir or None,
        trace_path=trace_path,
        run_id=run_id,
    )
    _, test = split_dataset(list(corpus.labels.values()), config.cutoff_year)
    covered = [s for s in test if s.key in result.predictions]
    if not covered:
        for outcome in result.outcomes.values():
            if outcome.error:
                click.echo(f"  {outcome.key}: {outcome.error}", err=True)
        raise click.ClickException("no test key produced a prediction")
    metrics = compute_metrics(result.predictions, covered)
    row = AblationRow(
        mode=mode, agents=ablation.label(),
        alpha=config.alpha, window_k=config.window_k,
        delta=config.delta, w_high=config.w_high,
        n_test=len(covered), metrics=metrics,
    )
    write_results_csv([row], out_path)
    if predictions_out:
        write_predictions_csv(result.predictions, test, predictions_out)
    status = "partial" if result.partial else "complete"
    click.echo(
        f"{status} run {result.run_id}: accuracy {metrics.overall_accuracy:.4f} "
        f"over {len(covered)} test keys -> {out_path} (trace: {trace_path})"
    )
    if result.partial:
        for outcome in result.outcomes.values():
            if outcome.error:
                click.echo(f"  {outcome.key}: {outcome.error}", err=True)
        sys.exit(2)


@main.command()
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--backend", "backend_type", type=click.Choice(["mock", "http"]), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def ablate(grid_path, config_path, corpus_dir, backend_type, out_path):
    """Sweep the ablation grid and write one metrics row per point."""
    config = load_config(config_path)
    if backend_type:
        config = dataclasses.replace(
            config, backend=dataclasses.replace(config.backend, type=backend_type)
        )
    if config.backend.rules_file and not Path(config.backend.rules_file).is_absolute():
        config = dataclasses.replace(
            config,
            backend=dataclasses.replace(
                config.backend, rules_file=str(Path(corpus_dir) / config.backend.rules_file)
            ),
        )
    corpus = load_corpus(corpus_dir, store_name=config.features.store)
    backend = build_backend(config)
    grid = AblationGrid.from_dict(json.loads(Path(grid_path).read_text()))
    rows = run_ablation(grid, corpus, config, backend)
    write_results_csv(rows, out_path)
    click.echo(f"wrote {len(rows)} ablation rows to {out_path}")


if __name__ == "__main__":
    main()
