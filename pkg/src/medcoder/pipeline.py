"""Orchestration: extract, retrieve, rerank per record, with the four
ablation modes, batch running, and JSON-lines output."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable

from .embedding import EmbeddingProvider, VectorIndex
from .errors import MedcoderError
from .extractor import (
    Extraction,
    ExtractionResult,
    PromptTemplate,
    default_extraction_template,
    extract_record,
)
from .grounding import GroundedSpan
from .llm import LlmProvider
from .ontology import Ontology
from .reranker import RankedCodes, RerankInput, default_rerank_template, rerank
from .retriever import CandidateSet, merge_candidates, retrieve_for_diagnosis

MODE_PROMPT = "prompt"
MODE_RETRIEVE = "retrieve"
MODE_PROMPT_RETRIEVE = "prompt-retrieve"
MODE_FULL = "full"
ALL_MODES = (MODE_PROMPT, MODE_RETRIEVE, MODE_PROMPT_RETRIEVE, MODE_FULL)


@dataclass(frozen=True)
class MedicalRecord:
    record_id: str
    text: str


@dataclass
class PipelineConfig:
    mode: str = MODE_FULL
    k: int = 1
    k_retrieve: int = 10
    model: str = "default"
    audit: bool = False

    def __post_init__(self):
        if self.mode not in ALL_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        # cutoffs beyond the candidate pool are vacuous
        if self.mode != MODE_PROMPT:
            self.k = min(self.k, self.k_retrieve + 1)

    def config_hash(self) -> str:
        blob = json.dumps(
            {"mode": self.mode, "k": self.k, "k_retrieve": self.k_retrieve, "model": self.model},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class PipelineDeps:
    ontology: Ontology
    llm_provider: LlmProvider
    embed_provider: EmbeddingProvider | None = None
    index: VectorIndex | None = None
    extraction_template: PromptTemplate = field(default_factory=default_extraction_template)
    rerank_template: PromptTemplate = field(default_factory=default_rerank_template)


@dataclass
class DiagnosisPrediction:
    extraction: Extraction
    ranked: RankedCodes


@dataclass
class PredictionResult:
    record_id: str
    mode: str
    k: int
    per_diagnosis: list[DiagnosisPrediction]
    predicted_set: list[str]  # sorted, deduplicated union of top-k codes

    def to_json_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "mode": self.mode,
            "k": self.k,
            "predicted_set": self.predicted_set,
            "per_diagnosis": [
                {
                    "diagnosis": p.extraction.diagnosis,
                    "diagnosis_span": _span_dict(p.extraction.diagnosis_span),
                    "evidence": [
                        {
                            "raw": e.raw,
                            "sentence": e.substituted_sentence,
                            "span": _span_dict(e.span),
                            "substituted": e.substituted,
                        }
                        for e in p.extraction.evidence
                    ],
                    "prompted_code": p.extraction.prompted_code,
                    "prompted_code_valid": p.extraction.prompted_code_valid,
                    "codes": p.ranked.codes,
                    "repaired": p.ranked.repaired,
                    "fallback": p.ranked.fallback,
                }
                for p in self.per_diagnosis
            ],
        }


def _span_dict(span: GroundedSpan) -> dict:
    return {
        "text": span.text,
        "start": span.start,
        "end": span.end,
        "score": span.score,
        "grounded": span.grounded,
    }


def _candidates_for(
    extraction: Extraction,
    diagnosis_index: int,
    config: PipelineConfig,
    deps: PipelineDeps,
) -> CandidateSet:
    assert deps.index is not None and deps.embed_provider is not None
    query_text = (
        extraction.diagnosis_span.text
        if extraction.diagnosis_span.grounded
        else extraction.diagnosis
    )
    retrieved = retrieve_for_diagnosis(
        query_text,
        deps.index,
        deps.embed_provider,
        config.k_retrieve,
        diagnosis_index=diagnosis_index,
    )
    return merge_candidates(extraction, retrieved, deps.ontology, diagnosis_index=diagnosis_index)


def run_record(
    record: MedicalRecord, config: PipelineConfig, deps: PipelineDeps
) -> PredictionResult:
    """Run one record through the configured ablation mode."""
    if config.mode != MODE_PROMPT and (deps.index is None or deps.embed_provider is None):
        raise MedcoderError(f"mode {config.mode} requires an embedding index")

    extraction_result: ExtractionResult = extract_record(
        record.record_id,
        record.text,
        deps.ontology,
        deps.llm_provider,
        template=deps.extraction_template,
        model=config.model,
    )

    per_diagnosis: list[DiagnosisPrediction] = []
    for i, extraction in enumerate(extraction_result.extractions):
        if config.mode == MODE_PROMPT:
            codes = [extraction.prompted_code] if extraction.prompted_code_valid else []
            ranked = RankedCodes(diagnosis_index=i, codes=codes)
        elif config.mode == MODE_RETRIEVE:
            retrieved = retrieve_for_diagnosis(
                extraction.diagnosis_span.text
                if extraction.diagnosis_span.grounded
                else extraction.diagnosis,
                deps.index,
                deps.embed_provider,
                config.k_retrieve,
                diagnosis_index=i,
            )
            billable = [c.code for c in retrieved if deps.ontology.is_billable(c.code)]
            ranked = RankedCodes(diagnosis_index=i, codes=billable[: config.k])
        elif config.mode == MODE_PROMPT_RETRIEVE:
            candidates = _candidates_for(extraction, i, config, deps)
            ranked = RankedCodes(diagnosis_index=i, codes=candidates.codes()[: config.k])
        else:  # full
            candidates = _candidates_for(extraction, i, config, deps)
            if candidates.candidates:
                evidence = [e.substituted_sentence for e in extraction.evidence]
                rerank_input = RerankInput.build(
                    extraction.diagnosis_span.text
                    if extraction.diagnosis_span.grounded
                    else extraction.diagnosis,
                    evidence,
                    candidates,
                    deps.ontology,
                )
                full_ranking = rerank(
                    rerank_input,
                    deps.llm_provider,
                    template=deps.rerank_template,
                    model=config.model,
                )
                ranked = RankedCodes(
                    diagnosis_index=i,
                    codes=full_ranking.codes[: config.k],
                    rerank_raw=full_ranking.rerank_raw,
                    repaired=full_ranking.repaired,
                    fallback=full_ranking.fallback,
                )
            else:
                ranked = RankedCodes(diagnosis_index=i, codes=[])
        per_diagnosis.append(DiagnosisPrediction(extraction=extraction, ranked=ranked))

    predicted = sorted({code for p in per_diagnosis for code in p.ranked.codes})
    return PredictionResult(
        record_id=record.record_id,
        mode=config.mode,
        k=config.k,
        per_diagnosis=per_diagnosis,
        predicted_set=predicted,
    )


@dataclass
class BatchOutcome:
    results: list[PredictionResult]
    manifest: dict

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.manifest["records"] if r["status"] == "failed"]


def run_batch(
    records: Iterable[MedicalRecord],
    config: PipelineConfig,
    deps: PipelineDeps,
) -> BatchOutcome:
    """Run records in input order; per-record failures are isolated and
    recorded in the manifest, the batch continues."""
    results: list[PredictionResult] = []
    statuses: list[dict] = []
    for record in records:
        try:
            result = run_record(record, config, deps)
            results.append(result)
            statuses.append({"record_id": record.record_id, "status": "ok"})
        except MedcoderError as exc:
            statuses.append(
                {"record_id": record.record_id, "status": "failed", "error": str(exc)}
            )
    manifest = {
        "config": {
            "mode": config.mode,
            "k": config.k,
            "k_retrieve": config.k_retrieve,
            "model": config.model,
        },
        "config_hash": config.config_hash(),
        "prompt_templates": {
            "extraction": _template_hash(deps.extraction_template),
            "rerank": _template_hash(deps.rerank_template),
        },
        "provider_id": deps.llm_provider.provider_id,
        "set_rule": "record-level set is the union over diagnoses of each diagnosis's top-k codes",
        "records": statuses,
    }
    return BatchOutcome(results=results, manifest=manifest)


def _template_hash(template: PromptTemplate) -> str:
    return hashlib.sha256(template.text.encode("utf-8")).hexdigest()[:16]


def write_predictions_jsonl(outcome: BatchOutcome, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in outcome.results:
            fh.write(json.dumps(result.to_json_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_predictions_jsonl(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
