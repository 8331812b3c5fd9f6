"""Command-line entry points.

Configuration can come from a TOML file (--config); command-line flags
override file values. Environment variables are consulted only for API
keys (MEDCODER_LLM_API_KEY, MEDCODER_EMBED_API_KEY).
"""

from __future__ import annotations

import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import click

from . import evalkit
from .embedding import HashingEmbedder, HttpEmbeddingProvider, VectorIndex, build_index
from .errors import MedcoderError
from .extractor import PromptTemplate
from .llm import HttpLlmProvider, MockLlmProvider, RecordingProvider
from .ontology import (
    Ontology,
    billable_ancestor_violations,
    parse_code_table,
    parse_synonym_table,
    serialize_code_table,
)
from .pipeline import (
    ALL_MODES,
    MedicalRecord,
    PipelineConfig,
    PipelineDeps,
    run_batch,
    write_predictions_jsonl,
)
from .service import build_state, create_app


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _fail(message: str, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"error": message}), file=sys.stderr)
    else:
        print(f"error: {message}", file=sys.stderr)
    sys.exit(1)


def _load_ontology(path: str, synonyms: str | None = None) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        ontology = parse_code_table(fh)
    if synonyms:
        with open(synonyms, encoding="utf-8") as fh:
            parse_synonym_table(fh, ontology)
    return ontology


def _embed_provider(cfg: dict):
    section = cfg.get("embedding", {})
    if section.get("provider", "hash") == "http":
        return HttpEmbeddingProvider(
            base_url=section["base_url"],
            model=section.get("model", "default"),
            dimension=int(section.get("dimension", 256)),
            timeout_secs=float(section.get("timeout_secs", 30.0)),
        )
    return HashingEmbedder(dimension=int(section.get("dimension", 256)))


def _llm_provider(cfg: dict, fixtures: str | None):
    section = cfg.get("llm", {})
    fixtures = fixtures or section.get("fixtures")
    if fixtures:
        return MockLlmProvider.from_file(fixtures)
    if "base_url" not in section:
        raise MedcoderError(
            "no LLM configured: pass --fixtures for offline runs or set [llm].base_url"
        )
    return HttpLlmProvider(
        base_url=section["base_url"],
        model=section.get("model", "default"),
        timeout_secs=float(section.get("timeout_secs", 60.0)),
    )


def _load_records(path: str) -> list[MedicalRecord]:
    if os.path.isdir(path):
        return [
            MedicalRecord(record_id=r.record_id, text=r.text)
            for r in evalkit.load_dataset(path)
        ]
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                raw = json.loads(line)
                records.append(MedicalRecord(record_id=raw["record_id"], text=raw["text"]))
    return records


def _deps(cfg: dict, ontology_path: str, index_path: str | None, fixtures: str | None,
          synonyms: str | None = None) -> PipelineDeps:
    ontology = _load_ontology(ontology_path, synonyms)
    index = VectorIndex.load(index_path) if index_path else None
    deps = PipelineDeps(
        ontology=ontology,
        llm_provider=_llm_provider(cfg, fixtures),
        embed_provider=_embed_provider(cfg),
        index=index,
    )
    templates = cfg.get("prompts", {})
    if templates.get("extraction"):
        deps.extraction_template = PromptTemplate.from_file(templates["extraction"])
    if templates.get("rerank"):
        deps.rerank_template = PromptTemplate.from_file(templates["rerank"])
    return deps


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True, help="machine-readable errors on stderr")
@click.pass_context
def main(ctx, config_path, as_json):
    """Assisted ICD-10 coding: ontology ingestion, indexing, pipeline runs,
    evaluation, and the review service."""
    ctx.ensure_object(dict)
    ctx.obj["cfg"] = _load_config(config_path)
    ctx.obj["json"] = as_json


@main.command("ingest-ontology")
@click.argument("tsv", type=click.Path(exists=True))
@click.option("--synonyms", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None, help="write normalized TSV here")
@click.pass_context
def ingest_ontology(ctx, tsv, synonyms, out):
    """Validate a code table (and optional synonym file)."""
    try:
        ontology = _load_ontology(tsv, synonyms)
    except MedcoderError as exc:
        _fail(str(exc), ctx.obj["json"])
    violations = billable_ancestor_violations(ontology)
    if violations:
        _fail(f"billable ancestor violations: {violations[:5]}", ctx.obj["json"])
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(serialize_code_table(ontology)) + "\n")
    click.echo(f"ok: {len(ontology)} codes, "
               f"{sum(len(v) for v in ontology.synonym_descriptions.values())} synonyms")


@main.command("build-index")
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), required=True)
@click.option("--synonyms", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def build_index_cmd(ctx, ontology_path, synonyms, out):
    """Embed billable code descriptions into a vector index file."""
    cfg = ctx.obj["cfg"]
    try:
        ontology = _load_ontology(ontology_path, synonyms)
        index = build_index(ontology, _embed_provider(cfg))
        index.save(out)
    except MedcoderError as exc:
        _fail(str(exc), ctx.obj["json"])
    click.echo(f"ok: {len(index)} entries, dim {index.dimension} -> {out}")


@main.command("run")
@click.option("--mode", type=click.Choice(ALL_MODES), default="full")
@click.option("--k", type=int, default=1)
@click.option("--k-retrieve", type=int, default=10)
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), required=True)
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
@click.option("--fixtures", type=click.Path(exists=True), default=None,
              help="LLM replay fixture file (offline mode)")
@click.option("--out", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.pass_context
def run_cmd(ctx, mode, k, k_retrieve, records_path, ontology_path, index_path, fixtures, out, manifest_path):
    """Run the pipeline over records, writing JSON-lines predictions."""
    cfg = ctx.obj["cfg"]
    try:
        deps = _deps(cfg, ontology_path, index_path, fixtures)
        config = PipelineConfig(mode=mode, k=k, k_retrieve=k_retrieve,
                                model=cfg.get("llm", {}).get("model", "default"))
        records = _load_records(records_path)
        outcome = run_batch(records, config, deps)
        write_predictions_jsonl(outcome, out)
        with open(manifest_path or out + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(outcome.manifest, fh, indent=2, sort_keys=True)
    except MedcoderError as exc:
        _fail(str(exc), ctx.obj["json"])
    failed = outcome.failures
    click.echo(f"ok: {len(outcome.results)} records predicted, {len(failed)} failed")
    if failed:
        sys.exit(1)


@main.command("evaluate")
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--gold", "gold_path", type=click.Path(exists=True), required=True)
@click.option("--sweep-k", default=None, help="comma-separated cutoffs; needs --pred-by-k dir naming")
@click.option("--report", "report_path", type=click.Path(), required=True)
@click.option("--curve-csv", type=click.Path(), default=None)
@click.pass_context
def evaluate_cmd(ctx, pred_path, gold_path, sweep_k, report_path, curve_csv):
    """Score predictions against the annotated dataset."""
    from .pipeline import read_predictions_jsonl

    try:
        gold = evalkit.load_dataset(gold_path)
        predictions = read_predictions_jsonl(pred_path)
        report = evalkit.evaluate_predictions(predictions, gold)
        if sweep_k:
            ks = tuple(int(x) for x in sweep_k.split(","))
            # the same prediction file truncated client-side is not enough:
            # a sweep expects sibling files "<pred>.k<K>.jsonl"
            by_k = {}
            for k in ks:
                path = f"{pred_path}.k{k}.jsonl"
                if os.path.exists(path):
                    by_k[k] = read_predictions_jsonl(path)
            if by_k:
                report.per_k = evalkit.curve_at_k(by_k, gold, ks=tuple(sorted(by_k)))
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        if curve_csv and report.per_k:
            evalkit.write_curve_csv(report.per_k, curve_csv)
    except MedcoderError as exc:
        _fail(str(exc), ctx.obj["json"])
    c = report.codes
    click.echo(f"codes: P={c.precision:.3f} R={c.recall:.3f} F1={c.f1:.3f} (tp={c.tp} fp={c.fp} fn={c.fn})")


@main.command("serve")
@click.option("--addr", default="127.0.0.1:8000")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), required=True)
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
@click.option("--fixtures", type=click.Path(exists=True), default=None)
@click.option("--store", "store_path", type=click.Path(), default="selections.jsonl")
@click.option("--static-dir", type=click.Path(), default=None, help="built UI bundle to serve at /")
@click.option("--k", type=int, default=5)
@click.pass_context
def serve_cmd(ctx, addr, records_path, ontology_path, index_path, fixtures, store_path, static_dir, k):
    """Start the coder-assist HTTP service."""
    import uvicorn

    cfg = ctx.obj["cfg"]
    try:
        deps = _deps(cfg, ontology_path, index_path, fixtures)
        records = _load_records(records_path)
        config = PipelineConfig(mode="full", k=k,
                                model=cfg.get("llm", {}).get("model", "default"))
        state = build_state(records, deps, store_path, config=config)
        app = create_app(state, static_dir=static_dir)
    except MedcoderError as exc:
        _fail(str(exc), ctx.obj["json"])
    host, _, port = addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


@main.command("record-fixtures")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), required=True)
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
@click.option("--out", "fixture_path", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(ALL_MODES), default="full")
@click.option("--k", type=int, default=5)
@click.pass_context
def record_fixtures_cmd(ctx, records_path, ontology_path, index_path, fixture_path, mode, k):
    """Run against the live provider, appending replay fixtures."""
    cfg = ctx.obj["cfg"]
    try:
        deps = _deps(cfg, ontology_path, index_path, fixtures=None)
        deps.llm_provider = RecordingProvider(deps.llm_provider, fixture_path)
        config = PipelineConfig(mode=mode, k=k,
                                model=cfg.get("llm", {}).get("model", "default"))
        records = _load_records(records_path)
        outcome = run_batch(records, config, deps)
    except MedcoderError as exc:
        _fail(str(exc), ctx.obj["json"])
    click.echo(f"ok: recorded fixtures for {len(outcome.results)} records -> {fixture_path}")


if __name__ == "__main__":
    main()
