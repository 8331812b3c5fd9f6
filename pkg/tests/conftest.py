import json

import pytest

from medcoder.embedding import HashingEmbedder, build_index
from medcoder.extractor import (
    default_extraction_template,
    build_extraction_prompt,
    ground_extractions,
    parse_extraction_json,
)
from medcoder.llm import MockLlmProvider, canonical_request_hash
from medcoder.ontology import parse_code_table
from medcoder.pipeline import MedicalRecord
from medcoder.reranker import RerankInput, build_rerank_prompt, default_rerank_template
from medcoder.retriever import merge_candidates, retrieve_for_diagnosis

# Small fixture ontology: 10 billable codes plus non-billable headers.
# With k_retrieve=10 every billable code is reachable by retrieval, so
# rerank fixtures fully control the final ordering.
ONTOLOGY_TSV = """\
# code\tbillable\tshort\tlong
F32.A\t1\tDepression, unsp\tDepression, unspecified
F32.9\t1\tMajor depress d/o, single\tMajor depressive disorder, single episode, unspecified
F33.9\t1\tMajor depress d/o, recur\tMajor depressive disorder, recurrent, unspecified
S80.01XA\t1\tContusion right knee, init\tContusion of right knee, initial encounter
S80.01\t0\tContusion of knee\tContusion of knee
M75.42\t1\tImpingement left shoulder\tImpingement syndrome of left shoulder
M75.41\t1\tImpingement right shoulder\tImpingement syndrome of right shoulder
M75.40\t0\tImpingement unsp shoulder\tImpingement syndrome of unspecified shoulder
M22.2X1\t1\tPatellofemoral right knee\tPatellofemoral disorders, right knee
M17.2\t1\tBilat post-traum OA knee\tBilateral post-traumatic osteoarthritis of knee
M65.321\t1\tTrigger finger right index\tTrigger finger, right index finger
I50.1\t1\tLeft ventric heart fail\tLeft ventricular failure, unspecified
I50\t0\tHeart failure\tHeart failure
"""

ERROR_CASE_RECORDS = [
    MedicalRecord(
        record_id="rec1",
        text="Regarding her depression, the patient feels that it is well managed on Effexor.",
    ),
    MedicalRecord(
        record_id="rec2",
        text=(
            "Edema and ecchymosis surrounding the knee. Positive pain to palpation. "
            "Assessment: Right Knee Contusion"
        ),
    ),
    MedicalRecord(
        record_id="rec3",
        text="Today I discussed conservative options for left shoulder impingement with the patient.",
    ),
    MedicalRecord(
        record_id="rec4",
        text=(
            "His examination is consistent with rather severe post-traumatic "
            "stenosing tenosynovitis of the right index finger."
        ),
    ),
]

# What the mock extraction step "says" for each record: the LLM surface
# diagnosis, its claimed evidence, and its parametric code guess.
ERROR_CASE_EXTRACTIONS = {
    "rec1": [
        {
            "diagnosis": "depression",
            "supporting_evidence": ["well managed on Effexor"],
            "icd10": "F32.9",
        }
    ],
    "rec2": [
        {
            "diagnosis": "Right Knee Contusion",
            "supporting_evidence": ["pain on palpation of knee", "Edema and ecchymosis of knee"],
            "icd10": "S80.01XA",
        }
    ],
    "rec3": [
        {
            "diagnosis": "left shoulder impingement",
            "supporting_evidence": ["discussed conservative options"],
            "icd10": "M75.40",
        }
    ],
    "rec4": [
        {
            "diagnosis": "stenosing tenosynovitis of the right index finger",
            "supporting_evidence": ["examination consistent with stenosing tenosynovitis"],
            "icd10": "M22.40",
        }
    ],
}

# Final top-1 the rerank fixture should produce per record.
ERROR_CASE_RERANK_TOP = {
    "rec1": "F32.A",
    "rec2": "S80.01XA",
    "rec3": "M75.42",
    "rec4": "M22.2X1",
}

ERROR_CASE_GOLD = {
    "rec1": ("depression", "F32.A"),
    "rec2": ("Right Knee Contusion", "S80.01XA"),
    "rec3": ("left shoulder impingement", "M75.42"),
    "rec4": ("stenosing tenosynovitis of the right index finger", "M65.321"),
}

K_RETRIEVE = 10


def make_extraction_response(objects, reasoning="The note documents the conditions below."):
    return reasoning + "\n```json\n" + json.dumps(objects, indent=2) + "\n```"


def build_llm_fixtures(records, extractions_by_id, ontology, index, embedder,
                       desired_top=None, k_retrieve=K_RETRIEVE):
    """Compute the replay fixture map a live run would have produced.

    Extraction responses come from the given payloads; rerank responses
    are permutations that put the desired code first (identity order when
    no preference is given).
    """
    desired_top = desired_top or {}
    extraction_template = default_extraction_template()
    rerank_template = default_rerank_template()
    fixtures = {}
    for record in records:
        response_text = make_extraction_response(extractions_by_id[record.record_id])
        request = build_extraction_prompt(record.text, extraction_template)
        fixtures[canonical_request_hash(request)] = response_text

        parsed, _reasoning = parse_extraction_json(response_text)
        result = ground_extractions(parsed, record.text, ontology, record_id=record.record_id)
        for i, extraction in enumerate(result.extractions):
            query = (
                extraction.diagnosis_span.text
                if extraction.diagnosis_span.grounded
                else extraction.diagnosis
            )
            retrieved = retrieve_for_diagnosis(query, index, embedder, k_retrieve, i)
            candidates = merge_candidates(extraction, retrieved, ontology, i)
            codes = candidates.codes()
            if len(codes) <= 1:
                continue
            rerank_input = RerankInput.build(
                query,
                [e.substituted_sentence for e in extraction.evidence],
                candidates,
                ontology,
            )
            rerank_request = build_rerank_prompt(rerank_input, rerank_template)
            order = list(range(1, len(codes) + 1))
            want = desired_top.get(record.record_id)
            if want in codes:
                first = codes.index(want) + 1
                order = [first] + [x for x in order if x != first]
            fixtures[canonical_request_hash(rerank_request)] = " > ".join(
                f"[{x}]" for x in order
            )
    return fixtures


@pytest.fixture(scope="session")
def ontology():
    return parse_code_table(ONTOLOGY_TSV.splitlines())


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder(dimension=256)


@pytest.fixture(scope="session")
def vector_index(ontology, embedder):
    return build_index(ontology, embedder)


@pytest.fixture(scope="session")
def error_case_fixture_map(ontology, vector_index, embedder):
    return build_llm_fixtures(
        ERROR_CASE_RECORDS,
        ERROR_CASE_EXTRACTIONS,
        ontology,
        vector_index,
        embedder,
        desired_top=ERROR_CASE_RERANK_TOP,
    )


@pytest.fixture()
def mock_llm(error_case_fixture_map):
    return MockLlmProvider(error_case_fixture_map)


def write_gold_dataset(path, records=ERROR_CASE_RECORDS, gold=ERROR_CASE_GOLD,
                       manifest_counts=None):
    """Write records + gold annotations in the evaluation dataset layout."""
    path.mkdir(parents=True, exist_ok=True)
    for record in records:
        diagnosis, code = gold[record.record_id]
        payload = {
            "record_id": record.record_id,
            "text": record.text,
            "annotations": [
                {"diagnosis": diagnosis, "icd10": code, "evidence": [record.text.split(".")[0]]}
            ],
        }
        (path / f"{record.record_id}.json").write_text(json.dumps(payload), encoding="utf-8")
    if manifest_counts is not None:
        (path / "manifest.json").write_text(
            json.dumps({"counts": manifest_counts}), encoding="utf-8"
        )
    return path
