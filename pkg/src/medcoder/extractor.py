"""Step 1: prompt the LLM for diagnoses, evidence, and initial codes,
then anchor everything back into the record text.

Diagnoses are grounded by fuzzy span matching; evidence strings are
substituted with their top BM25 sentence from the record; prompted codes
are normalized and checked against the ontology. Nothing is discarded
here: failures are flag-based so downstream stages and the UI can show
them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import NoJsonFound, SchemaViolation, TemplateMissingPlaceholder
from .grounding import GroundedSpan, bm25_top_sentences, fuzzy_ground, segment_sentences, ungrounded_span
from .llm import ChatMessage, ChatRequest, LlmProvider, complete
from .ontology import Ontology, normalize_code, validate_code_format

RECORD_PLACEHOLDER = "{{record}}"


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    name: str = "inline"

    @classmethod
    def from_file(cls, path: str) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            return cls(text=fh.read(), name=path)

    @classmethod
    def builtin(cls, name: str) -> "PromptTemplate":
        text = resources.files("medcoder").joinpath(f"prompts/{name}.txt").read_text("utf-8")
        return cls(text=text, name=f"builtin:{name}")


def default_extraction_template() -> PromptTemplate:
    return PromptTemplate.builtin("extraction")


@dataclass(frozen=True)
class EvidenceItem:
    raw: str
    substituted_sentence: str
    span: GroundedSpan
    substituted: bool


@dataclass
class Extraction:
    diagnosis: str
    diagnosis_span: GroundedSpan
    evidence: list[EvidenceItem] = field(default_factory=list)
    prompted_code: str | None = None
    prompted_code_valid: bool = False


@dataclass
class ExtractionResult:
    record_id: str
    extractions: list[Extraction]
    raw_llm_text: str = ""
    reasoning_text: str = ""


def build_extraction_prompt(
    record_text: str, template: PromptTemplate, model: str = "default"
) -> ChatRequest:
    """Render the extraction template around the record."""
    if RECORD_PLACEHOLDER not in template.text:
        raise TemplateMissingPlaceholder(RECORD_PLACEHOLDER)
    rendered = template.text.replace(RECORD_PLACEHOLDER, record_text)
    return ChatRequest(messages=(ChatMessage(role="user", content=rendered),), model=model)


def parse_extraction_json(llm_text: str) -> tuple[list[tuple[str, list[str], str | None]], str]:
    """Pull the first JSON array out of the LLM text.

    Tolerates markdown fences and leading reasoning prose; the prose
    before the array is returned as reasoning_text. Each object needs a
    string "diagnosis"; "supporting_evidence" defaults to []; "icd10" is
    optional. Unknown keys are ignored.
    """
    decoder = json.JSONDecoder()
    array = None
    array_start = -1
    pos = llm_text.find("[")
    while pos != -1:
        try:
            candidate, _end = decoder.raw_decode(llm_text, pos)
        except json.JSONDecodeError:
            candidate = None
        if isinstance(candidate, list):
            array = candidate
            array_start = pos
            break
        pos = llm_text.find("[", pos + 1)
    if array is None:
        raise NoJsonFound("no JSON array found in LLM output")

    reasoning = llm_text[:array_start].strip()
    if reasoning.endswith("```json"):
        reasoning = reasoning[: -len("```json")].strip()
    elif reasoning.endswith("```"):
        reasoning = reasoning[: -len("```")].strip()

    parsed: list[tuple[str, list[str], str | None]] = []
    for i, obj in enumerate(array):
        if not isinstance(obj, dict):
            raise SchemaViolation(i, "", "expected a JSON object")
        diagnosis = obj.get("diagnosis")
        if not isinstance(diagnosis, str) or not diagnosis.strip():
            raise SchemaViolation(i, "diagnosis", "must be a non-empty string")
        evidence = obj.get("supporting_evidence", [])
        if not isinstance(evidence, list) or not all(isinstance(e, str) for e in evidence):
            raise SchemaViolation(i, "supporting_evidence", "must be an array of strings")
        icd10 = obj.get("icd10")
        if icd10 is not None and not isinstance(icd10, str):
            raise SchemaViolation(i, "icd10", "must be a string when present")
        parsed.append((diagnosis.strip(), [e for e in evidence], icd10))
    return parsed, reasoning


def render_extraction_json(parsed: list[tuple[str, list[str], str | None]]) -> str:
    """Inverse of parse_extraction_json for round-trip testing and audits."""
    objects = []
    for diagnosis, evidence, icd10 in parsed:
        obj: dict = {"diagnosis": diagnosis, "supporting_evidence": list(evidence)}
        if icd10 is not None:
            obj["icd10"] = icd10
        objects.append(obj)
    return json.dumps(objects, indent=2, ensure_ascii=False)


def ground_extractions(
    parsed: list[tuple[str, list[str], str | None]],
    record_text: str,
    ontology: Ontology,
    record_id: str = "",
    raw_llm_text: str = "",
    reasoning_text: str = "",
) -> ExtractionResult:
    """Anchor parsed extractions into the record.

    Duplicate diagnoses landing on the same grounded span are merged with
    their evidence unioned, so set-based metrics never double count.
    """
    index = segment_sentences(record_text)
    extractions: list[Extraction] = []
    by_span: dict[tuple[int, int], Extraction] = {}

    for diagnosis, evidence_strings, icd10 in parsed:
        span = fuzzy_ground(diagnosis, record_text) if diagnosis else ungrounded_span(diagnosis)

        evidence_items: list[EvidenceItem] = []
        for raw in evidence_strings:
            top = bm25_top_sentences(raw, index, 1)
            if top:
                sentence, _score = top[0]
                evidence_items.append(
                    EvidenceItem(
                        raw=raw,
                        substituted_sentence=sentence.text,
                        span=GroundedSpan(
                            text=sentence.text,
                            start=sentence.start,
                            end=sentence.end,
                            score=1.0,
                            grounded=True,
                        ),
                        substituted=True,
                    )
                )
            else:
                evidence_items.append(
                    EvidenceItem(
                        raw=raw,
                        substituted_sentence=raw,
                        span=ungrounded_span(raw),
                        substituted=False,
                    )
                )

        prompted_code = None
        valid = False
        if icd10:
            prompted_code = normalize_code(icd10)
            valid = validate_code_format(prompted_code) and ontology.is_billable(prompted_code)

        extraction = Extraction(
            diagnosis=diagnosis,
            diagnosis_span=span,
            evidence=evidence_items,
            prompted_code=prompted_code,
            prompted_code_valid=valid,
        )

        if span.grounded:
            existing = by_span.get((span.start, span.end))
            if existing is not None:
                seen = {e.raw for e in existing.evidence}
                existing.evidence.extend(e for e in evidence_items if e.raw not in seen)
                if existing.prompted_code is None and prompted_code is not None:
                    existing.prompted_code = prompted_code
                    existing.prompted_code_valid = valid
                continue
            by_span[(span.start, span.end)] = extraction
        extractions.append(extraction)

    return ExtractionResult(
        record_id=record_id,
        extractions=extractions,
        raw_llm_text=raw_llm_text,
        reasoning_text=reasoning_text,
    )


def extract_record(
    record_id: str,
    record_text: str,
    ontology: Ontology,
    provider: LlmProvider,
    template: PromptTemplate | None = None,
    model: str = "default",
) -> ExtractionResult:
    """Full step-1 pass: prompt, parse, ground."""
    template = template or default_extraction_template()
    request = build_extraction_prompt(record_text, template, model=model)
    response = complete(request, provider)
    parsed, reasoning = parse_extraction_json(response.text)
    return ground_extractions(
        parsed,
        record_text,
        ontology,
        record_id=record_id,
        raw_llm_text=response.text,
        reasoning_text=reasoning,
    )
