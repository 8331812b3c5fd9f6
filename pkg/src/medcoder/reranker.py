"""Step 3: listwise LLM re-ranking of one diagnosis's candidate codes.

The LLM sees the diagnosis, its evidence sentences, and a numbered
candidate list, and answers with a permutation string "[i] > [j] > ...".
Malformed answers are repaired, never rejected: a usable ranking with a
flag beats a pipeline error in a coder-assist tool.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptyCandidates, MedcoderError, TemplateMissingPlaceholder
from .extractor import PromptTemplate
from .llm import ChatMessage, ChatRequest, LlmProvider
from .ontology import Ontology
from .retriever import CandidateSet

_ID_RE = re.compile(r"\[(\d+)\]")

NO_EVIDENCE_MARKER = "(no supporting evidence)"


def default_rerank_template() -> PromptTemplate:
    return PromptTemplate.builtin("rerank")


@dataclass
class RerankInput:
    diagnosis: str
    evidence_sentences: list[str]
    candidates: CandidateSet
    descriptions: list[str]  # aligned with candidates, from the ontology

    @classmethod
    def build(
        cls, diagnosis: str, evidence_sentences: list[str], candidates: CandidateSet, ontology: Ontology
    ) -> "RerankInput":
        return cls(
            diagnosis=diagnosis,
            evidence_sentences=evidence_sentences,
            candidates=candidates,
            descriptions=[ontology.description_of(c.code) for c in candidates.candidates],
        )


@dataclass
class RankedCodes:
    diagnosis_index: int
    codes: list[str]  # final order, best first
    rerank_raw: str = ""
    repaired: bool = False
    fallback: bool = False


def build_rerank_prompt(
    input: RerankInput, template: PromptTemplate, model: str = "default"
) -> ChatRequest:
    """Render the listing "[i] CODE: description" into the template."""
    n = len(input.candidates.candidates)
    if n == 0:
        raise EmptyCandidates("cannot rerank an empty candidate set")
    listing = "\n".join(
        f"[{i}] {candidate.code}: {description}"
        for i, (candidate, description) in enumerate(
            zip(input.candidates.candidates, input.descriptions), start=1
        )
    )
    evidence = "\n".join(f"- {s}" for s in input.evidence_sentences) or NO_EVIDENCE_MARKER
    rendered = template.text
    for placeholder, value in (
        ("{{diagnosis}}", input.diagnosis),
        ("{{evidence}}", evidence),
        ("{{candidates}}", listing),
        ("{{n}}", str(n)),
    ):
        if placeholder not in rendered and placeholder in ("{{diagnosis}}", "{{candidates}}"):
            raise TemplateMissingPlaceholder(placeholder)
        rendered = rendered.replace(placeholder, value)
    return ChatRequest(messages=(ChatMessage(role="user", content=rendered),), model=model)


def parse_permutation(llm_text: str, n: int) -> tuple[list[int], bool]:
    """Extract a full permutation of 1..n from the LLM text.

    Bracketed integers in order of appearance; repair drops out-of-range
    ids and duplicates (first occurrence wins) and appends missing ids in
    original candidate order. Returns (permutation, repaired_flag).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    raw_ids = [int(m) for m in _ID_RE.findall(llm_text)]
    seen: set[int] = set()
    ordering: list[int] = []
    repaired = False
    for i in raw_ids:
        if i < 1 or i > n:
            repaired = True
            continue
        if i in seen:
            repaired = True
            continue
        seen.add(i)
        ordering.append(i)
    for i in range(1, n + 1):
        if i not in seen:
            if raw_ids:
                repaired = True
            ordering.append(i)
    if not raw_ids:
        repaired = True
    return ordering, repaired


def rerank(
    input: RerankInput,
    provider: LlmProvider,
    template: PromptTemplate | None = None,
    model: str = "default",
) -> RankedCodes:
    """Prompt, parse, reorder. Provider failure falls back to the
    original candidate order. Single candidates skip the LLM entirely."""
    codes = input.candidates.codes()
    n = len(codes)
    if n == 0:
        raise EmptyCandidates("cannot rerank an empty candidate set")
    if n == 1:
        return RankedCodes(diagnosis_index=input.candidates.diagnosis_index, codes=list(codes))

    template = template or default_rerank_template()
    request = build_rerank_prompt(input, template, model=model)
    try:
        response = provider.complete(request)
    except MedcoderError:
        return RankedCodes(
            diagnosis_index=input.candidates.diagnosis_index,
            codes=list(codes),
            fallback=True,
        )
    ordering, repaired = parse_permutation(response.text, n)
    return RankedCodes(
        diagnosis_index=input.candidates.diagnosis_index,
        codes=[codes[i - 1] for i in ordering],
        rerank_raw=response.text,
        repaired=repaired,
    )
