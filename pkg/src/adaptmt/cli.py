"""Operator command line: ingest, translate, terms, glossary, eval, stats, serve.

Every command reads one YAML config (see adaptmt.config) and fails on config
problems before touching the network. Artifact-producing commands write a
sibling ``<out>.manifest.json`` recording the config hash, provider, seeds,
and timing, which is enough to re-run byte-identically against fixture
providers.
"""

from __future__ import annotations

import json
import time
import warnings as pywarnings
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import click

from adaptmt.config import (
    AppConfig,
    ConfigError,
    build_llm_provider,
    build_mt_provider,
    load_config,
)
from adaptmt.evaluation import EvaluationError, report, report_csv, report_table
from adaptmt.gateway import AuthError, GatewayError
from adaptmt.pipeline import (
    PipelineError,
    TranslationPipeline,
    strategy_from_dict,
    write_results,
)
from adaptmt.prompts import PromptError
from adaptmt.retrieval import RetrievalConfig, TMIndex, bucket_stats
from adaptmt.terminology import (
    EXTRACTION_TEMPERATURE,
    Glossary,
    GlossaryConfig,
    ParsedTerm,
    aggregate_candidates,
    compile_glossary,
    extract_terms_batch,
    parse_term_lines,
)
from adaptmt.tm import IngestError, TMError, export, ingest as tm_ingest


@click.group()
@click.option(
    "--config",
    "config_path",
    default="adaptmt.yaml",
    show_default=True,
    help="Path to the YAML configuration file.",
)
@click.pass_context
def main(ctx: click.Context, config_path: str) -> None:
    """Real-time adaptive machine translation with in-context learning."""
    ctx.obj = config_path


def _load(ctx: click.Context) -> AppConfig:
    try:
        return load_config(ctx.obj)
    except ConfigError as exc:
        raise click.ClickException(f"[config] {exc}")


def _load_tm(config: AppConfig, tm_path: str, fmt: str = "jsonl"):
    try:
        return tm_ingest(tm_path, fmt, config.lang).tm
    except IngestError as exc:
        raise click.ClickException(f"[ingest] {exc} (rows: {exc.rows})")
    except (TMError, OSError) as exc:
        raise click.ClickException(f"[ingest] {exc}")


def _write_manifest(out_path: str, config: AppConfig, command: str, started: float, **extra) -> None:
    manifest = {
        "command": command,
        "config_hash": config.config_hash,
        "provider": config.llm.kind,
        "started_at": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "seconds": round(time.time() - started, 3),
        **extra,
    }
    Path(f"{out_path}.manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "tsv"]), default="jsonl",
              show_default=True)
@click.option("--out", required=True, help="Normalized TM JSONL to write.")
@click.pass_context
def ingest(ctx: click.Context, input_file: str, fmt: str, out: str) -> None:
    """Load a TM file, normalize and dedupe it, write the canonical store."""
    config = _load(ctx)
    started = time.time()
    try:
        result = tm_ingest(input_file, fmt, config.lang)
        export(result.tm, out, fmt="jsonl")
    except IngestError as exc:
        raise click.ClickException(f"[ingest] {exc} (rows: {exc.rows})")
    except TMError as exc:
        raise click.ClickException(f"[ingest] {exc}")
    click.echo(
        f"read {result.read} rows: kept {result.kept}, dropped {result.dropped}"
    )
    _write_manifest(out, config, "ingest", started,
                    inputs=[input_file], read=result.read, kept=result.kept,
                    dropped=result.dropped)


@main.command()
@click.option("--tm", "tm_path", required=True, type=click.Path(exists=True))
@click.option("--strategy", "kind", default=None,
              help="Prompt kind, e.g. few_shot_fuzzy (default from config).")
@click.option("--k", type=int, default=None, help="Fuzzy matches per prompt.")
@click.option("--seed", type=int, default=None, help="Seed for random-context runs.")
@click.option("--sources", type=click.Path(exists=True), default=None,
              help="File of new source lines; default translates the TM itself.")
@click.option("--glossary", "glossary_path", type=click.Path(exists=True),
              default=None, help="Compiled glossary TSV for the *terms strategies.")
@click.option("--self-exclusion/--no-self-exclusion", default=True, show_default=True)
@click.option("--out", required=True, help="Results JSONL to write.")
@click.pass_context
def translate(ctx, tm_path, kind, k, seed, sources, glossary_path, self_exclusion, out):
    """Translate with a strategy; writes one result per segment."""
    config = _load(ctx)
    started = time.time()
    body = dict(config.strategy_defaults)
    if kind is not None:
        body["kind"] = kind
    if k is not None:
        body["top_k"] = k
    if seed is not None:
        body["seed"] = seed
    body.setdefault("context_limit", config.budget.context_limit)
    try:
        strategy = strategy_from_dict(body, config.generation, config.display_names)
    except (ValueError, KeyError) as exc:
        raise click.ClickException(f"[config] invalid strategy: {exc}")

    tm = _load_tm(config, tm_path)
    glossary = None
    if glossary_path is not None:
        glossary = Glossary.load(glossary_path)
    pipeline = TranslationPipeline(
        tm, build_llm_provider(config), build_mt_provider(config), glossary
    )
    try:
        if sources is not None:
            lines = [
                line for line in Path(sources).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            results = pipeline.translate_many(lines, strategy)
        else:
            results = pipeline.run_experiment(strategy, self_exclusion=self_exclusion)
    except (PipelineError, AuthError, GatewayError, PromptError) as exc:
        raise click.ClickException(str(exc))
    write_results(results, out)
    failures = sum(1 for r in results if r.error)
    click.echo(f"translated {len(results)} segments ({failures} failures) -> {out}")
    _write_manifest(out, config, "translate", started,
                    strategy=strategy.kind.value, top_k=strategy.top_k,
                    seeds={"strategy_seed": strategy.seed},
                    segments=len(results), failures=failures)


@main.group()
def terms() -> None:
    """Terminology extraction commands."""


@terms.command("extract")
@click.option("--tm", "tm_path", required=True, type=click.Path(exists=True))
@click.option("--n", type=int, default=5, show_default=True,
              help="Terms requested per sentence pair.")
@click.option("--out", required=True, help="Parsed terms JSONL to write.")
@click.pass_context
def terms_extract(ctx, tm_path, n, out):
    """Ask the LLM for bilingual terms from every TM pair."""
    config = _load(ctx)
    started = time.time()
    tm = _load_tm(config, tm_path)
    provider = build_llm_provider(config)
    extraction_cfg = replace(
        config.generation, temperature=EXTRACTION_TEMPERATURE, top_p=1.0, stop=None
    )
    pairs = [p for p in tm.pairs if p.target]
    try:
        with pywarnings.catch_warnings():
            pywarnings.simplefilter("ignore")
            raw = extract_terms_batch(
                pairs, tm.lang, provider, extraction_cfg,
                n=n, separator=config.glossary.separator,
                display_names=config.display_names,
            )
    except (AuthError, GatewayError) as exc:
        raise click.ClickException(f"[gateway] {exc}")
    total_malformed = 0
    count = 0
    with open(out, "w", encoding="utf-8") as fh:
        for pair, lines in zip(pairs, raw):
            parsed, malformed = parse_term_lines(
                lines, config.glossary.separator, pair.source, pair.target or ""
            )
            total_malformed += malformed
            for term in parsed:
                fh.write(json.dumps({
                    "pair_id": pair.id,
                    "source": term.source,
                    "target": term.target,
                    "source_in_sentence": term.source_in_sentence,
                    "target_in_sentence": term.target_in_sentence,
                }, ensure_ascii=False) + "\n")
                count += 1
    click.echo(f"extracted {count} terms ({total_malformed} malformed lines) -> {out}")
    _write_manifest(out, config, "terms extract", started,
                    terms=count, malformed=total_malformed, segments=len(pairs))


@main.group()
def glossary() -> None:
    """Glossary compilation commands."""


@glossary.command("build")
@click.option("--terms", "terms_path", required=True, type=click.Path(exists=True),
              help="Parsed terms JSONL from `terms extract`.")
@click.option("--min-freq", type=int, default=None)
@click.option("--max-ngram", type=int, default=None)
@click.option("--out", required=True, help="Glossary TSV to write.")
@click.pass_context
def glossary_build(ctx, terms_path, min_freq, max_ngram, out):
    """Compile extracted terms into a sorted, deduplicated glossary."""
    config = _load(ctx)
    started = time.time()
    parsed = []
    with open(terms_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            parsed.append(ParsedTerm(
                source=obj["source"], target=obj["target"],
                source_in_sentence=obj.get("source_in_sentence", True),
                target_in_sentence=obj.get("target_in_sentence", True),
            ))
    cfg = GlossaryConfig(
        min_freq=min_freq if min_freq is not None else config.glossary.min_freq,
        max_ngram=max_ngram if max_ngram is not None else config.glossary.max_ngram,
        max_terms_per_segment=config.glossary.max_terms_per_segment,
        separator=config.glossary.separator,
    )
    with pywarnings.catch_warnings():
        pywarnings.simplefilter("ignore")
        compiled = compile_glossary(aggregate_candidates(parsed), cfg)
    compiled.save(out)
    click.echo(f"compiled {len(compiled)} glossary entries -> {out}")
    _write_manifest(out, config, "glossary build", started,
                    entries=len(compiled), min_freq=cfg.min_freq,
                    max_ngram=cfg.max_ngram, candidates=len(parsed))


@main.command("eval")
@click.option("--runs", multiple=True, required=True, type=click.Path(exists=True),
              help="Results JSONL files (repeatable); labels are file stems.")
@click.option("--refs", required=True, type=click.Path(exists=True),
              help="References: TSV (second column), JSONL (target), or plain lines.")
@click.option("--out", default=None, help="CSV report path (table prints to stdout).")
@click.pass_context
def eval_command(ctx, runs, refs, out):
    """Score hypothesis runs against references with BLEU, chrF, chrF++."""
    config = _load(ctx)
    started = time.time()
    references = _read_refs(refs)
    labeled = []
    for run_path in runs:
        hyps = []
        with open(run_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    hyps.append(json.loads(line).get("output", ""))
        labeled.append((Path(run_path).stem, hyps))
    try:
        rows = report(labeled, references)
    except EvaluationError as exc:
        raise click.ClickException(f"[eval] {exc}")
    click.echo(report_table(rows), nl=False)
    if out:
        Path(out).write_text(report_csv(rows), encoding="utf-8")
        click.echo(f"wrote {out}")
        _write_manifest(out, config, "eval", started,
                        runs=list(runs), refs=refs, n_segments=len(references))


def _read_refs(path: str) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    refs = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if path.endswith(".jsonl"):
            refs.append(json.loads(line)["target"])
        elif path.endswith(".tsv"):
            parts = line.split("\t")
            refs.append(parts[1] if len(parts) > 1 else parts[0])
        else:
            refs.append(line)
    return refs


@main.command()
@click.option("--tm", "tm_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, help="Optional CSV path for the histogram.")
@click.pass_context
def stats(ctx, tm_path, out):
    """Histogram of best-match similarity across the TM (self-excluded)."""
    config = _load(ctx)
    started = time.time()
    tm = _load_tm(config, tm_path)
    index = TMIndex.build(tm)
    cfg = RetrievalConfig(top_k=1, exclude_exact_self=True)
    best = []
    for pair in tm.pairs:
        matches = index.retrieve(pair.source, cfg, self_id=pair.id)
        if matches:
            best.append(matches[0])
    histogram = bucket_stats(best)
    width = max(len(label) for label in histogram)
    click.echo(f"best-match similarity over {len(best)} segments:")
    for label, count in histogram.items():
        click.echo(f"  {label:<{width}}  {count}")
    if out:
        # bucket labels contain commas, so they need quoting
        lines = ["bucket,count"] + [
            f'"{label}",{count}' for label, count in histogram.items()
        ]
        Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_manifest(out, config, "stats", started, segments=len(best))


@main.command()
@click.option("--host", default=None, help="Bind host (default from config).")
@click.option("--port", type=int, default=None, help="Bind port (default from config).")
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service with the configured providers."""
    config = _load(ctx)
    import uvicorn

    from adaptmt.service import create_app

    app = create_app(
        provider=build_llm_provider(config),
        mt_provider=build_mt_provider(config),
        generation=config.generation,
        state_dir=config.service.state_dir,
        display_names=config.display_names,
    )
    uvicorn.run(app, host=host or config.service.host, port=port or config.service.port)


if __name__ == "__main__":
    main()
