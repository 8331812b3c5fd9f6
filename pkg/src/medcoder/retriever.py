"""Step 2: per-diagnosis candidate codes via semantic search, merged
with the code the LLM proposed in step 1."""

from __future__ import annotations

from dataclasses import dataclass

from .embedding import EmbeddingProvider, VectorIndex, embed
from .extractor import Extraction
from .ontology import Ontology

SOURCE_PROMPTED = "PROMPTED"
SOURCE_RETRIEVED = "RETRIEVED"
SOURCE_BOTH = "BOTH"


@dataclass(frozen=True)
class Candidate:
    code: str
    source: str  # PROMPTED | RETRIEVED | BOTH
    retrieval_score: float | None
    diagnosis_index: int


@dataclass
class CandidateSet:
    diagnosis_index: int
    candidates: list[Candidate]

    def codes(self) -> list[str]:
        return [c.code for c in self.candidates]


def retrieve_for_diagnosis(
    diagnosis_text: str,
    index: VectorIndex,
    provider: EmbeddingProvider,
    k_retrieve: int,
    diagnosis_index: int = 0,
) -> list[Candidate]:
    """Embed the diagnosis and return top-k hits as RETRIEVED candidates."""
    if k_retrieve <= 0:
        return []
    query = embed(diagnosis_text, provider)
    hits = index.search(query, k_retrieve)
    return [
        Candidate(
            code=hit.code,
            source=SOURCE_RETRIEVED,
            retrieval_score=hit.score,
            diagnosis_index=diagnosis_index,
        )
        for hit in hits
    ]


def merge_candidates(
    extraction: Extraction,
    retrieved: list[Candidate],
    ontology: Ontology,
    diagnosis_index: int = 0,
) -> CandidateSet:
    """Prompted-first merge; invalid or non-billable prompted codes are
    dropped so hallucinated codes never reach re-ranking."""
    merged: list[Candidate] = []
    prompted = extraction.prompted_code if extraction.prompted_code_valid else None
    retrieved_codes = {c.code for c in retrieved}
    if prompted is not None:
        score = next(
            (c.retrieval_score for c in retrieved if c.code == prompted), None
        )
        source = SOURCE_BOTH if prompted in retrieved_codes else SOURCE_PROMPTED
        merged.append(
            Candidate(
                code=prompted,
                source=source,
                retrieval_score=score,
                diagnosis_index=diagnosis_index,
            )
        )
    for candidate in retrieved:
        if prompted is not None and candidate.code == prompted:
            continue
        if not ontology.is_billable(candidate.code):
            continue
        merged.append(
            Candidate(
                code=candidate.code,
                source=candidate.source,
                retrieval_score=candidate.retrieval_score,
                diagnosis_index=diagnosis_index,
            )
        )
    return CandidateSet(diagnosis_index=diagnosis_index, candidates=merged)
