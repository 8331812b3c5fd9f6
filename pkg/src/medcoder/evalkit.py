"""Dataset loading and metric computation.

All metrics are micro: counts are summed over instances before ratios,
so every annotation weighs the same regardless of its class. Diagnosis
scoring is set-based, case-insensitive, position-free; code scoring is
exact set intersection on normalized codes; evidence scoring uses a
configurable token-Jaccard partial match.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field

from .errors import ManifestMismatch, MissingK, SchemaViolation
from .ontology import normalize_code, validate_code_format

DEFAULT_EVIDENCE_JACCARD = 0.5
DEFAULT_K_SWEEP = (1, 2, 3, 5, 10)

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class GoldAnnotation:
    diagnosis: str
    icd_code: str
    evidence_texts: tuple[str, ...]


@dataclass(frozen=True)
class AnnotatedRecord:
    record_id: str
    text: str
    gold: tuple[GoldAnnotation, ...]

    def gold_codes(self) -> set[str]:
        return {normalize_code(g.icd_code) for g in self.gold}

    def gold_diagnoses(self) -> set[str]:
        return {g.diagnosis for g in self.gold}


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class MetricsReport:
    codes: Counts = field(default_factory=Counts)
    diagnoses: Counts = field(default_factory=Counts)
    evidence: Counts = field(default_factory=Counts)
    per_k: dict[int, Counts] = field(default_factory=dict)
    evidence_jaccard_threshold: float = DEFAULT_EVIDENCE_JACCARD

    def as_dict(self) -> dict:
        return {
            "codes": self.codes.as_dict(),
            "diagnoses": self.diagnoses.as_dict(),
            "evidence": self.evidence.as_dict(),
            "per_k": {str(k): c.as_dict() for k, c in sorted(self.per_k.items())},
            "evidence_jaccard_threshold": self.evidence_jaccard_threshold,
        }


def load_dataset(path: str) -> list[AnnotatedRecord]:
    """Load record JSON files from a directory.

    Each record file: {record_id, text, annotations: [{diagnosis, icd10,
    evidence: [...]}]}. An optional manifest.json carries expected batch
    totals which are verified when present.
    """
    records: list[AnnotatedRecord] = []
    if not os.path.isdir(path):
        raise SchemaViolation(path, "", "dataset path is not a directory")
    names = sorted(n for n in os.listdir(path) if n.endswith(".json") and n != "manifest.json")
    for name in names:
        full = os.path.join(path, name)
        with open(full, encoding="utf-8") as fh:
            raw = json.load(fh)
        for required in ("record_id", "text", "annotations"):
            if required not in raw:
                raise SchemaViolation(name, required, "missing")
        gold = []
        for i, ann in enumerate(raw["annotations"]):
            diagnosis = ann.get("diagnosis")
            if not isinstance(diagnosis, str) or not diagnosis:
                raise SchemaViolation(name, f"annotations[{i}].diagnosis", "must be a non-empty string")
            code = ann.get("icd10", "")
            if not validate_code_format(code):
                raise SchemaViolation(name, f"annotations[{i}].icd10", f"invalid code {code!r}")
            evidence = ann.get("evidence", [])
            if not isinstance(evidence, list) or not all(isinstance(e, str) for e in evidence):
                raise SchemaViolation(name, f"annotations[{i}].evidence", "must be an array of strings")
            gold.append(
                GoldAnnotation(
                    diagnosis=diagnosis,
                    icd_code=normalize_code(code),
                    evidence_texts=tuple(evidence),
                )
            )
        records.append(AnnotatedRecord(record_id=raw["record_id"], text=raw["text"], gold=tuple(gold)))

    manifest_path = os.path.join(path, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        expected = manifest.get("counts", {})
        found = {
            "records": len(records),
            "codes": sum(len(r.gold) for r in records),
            "evidence": sum(len(g.evidence_texts) for r in records for g in r.gold),
        }
        for key, want in expected.items():
            if found.get(key) != want:
                raise ManifestMismatch(expected, found)
    return records


def _normalize_text(text: str) -> str:
    return _WS_RE.sub(" ", text.strip().lower())


def score_diagnoses(pred: set[str], gold: set[str]) -> Counts:
    """Set-based exact match, case-insensitive, whitespace-normalized."""
    p = {_normalize_text(t) for t in pred if t.strip()}
    g = {_normalize_text(t) for t in gold if t.strip()}
    tp = len(p & g)
    return Counts(tp=tp, fp=len(p) - tp, fn=len(g) - tp)


def score_codes(pred: set[str], gold: set[str]) -> Counts:
    """Exact code-string set intersection on normalized codes."""
    p = {normalize_code(c) for c in pred if c.strip()}
    g = {normalize_code(c) for c in gold if c.strip()}
    tp = len(p & g)
    return Counts(tp=tp, fp=len(p) - tp, fn=len(g) - tp)


def token_jaccard(a: str, b: str) -> float:
    ta = set(re.findall(r"[a-z0-9]+", a.lower()))
    tb = set(re.findall(r"[a-z0-9]+", b.lower()))
    if not ta and not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def score_evidence(
    pred: list[str],
    gold: list[str],
    record_text: str = "",
    threshold: float = DEFAULT_EVIDENCE_JACCARD,
) -> Counts:
    """Partial match: token Jaccard >= threshold, greedy one-to-one
    assignment in descending overlap order."""
    pairs = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gold):
            overlap = token_jaccard(p, g)
            if overlap >= threshold:
                pairs.append((overlap, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_pred: set[int] = set()
    used_gold: set[int] = set()
    tp = 0
    for _overlap, i, j in pairs:
        if i in used_pred or j in used_gold:
            continue
        used_pred.add(i)
        used_gold.add(j)
        tp += 1
    return Counts(tp=tp, fp=len(pred) - tp, fn=len(gold) - tp)


def evaluate_predictions(
    predictions: list[dict],
    gold_records: list[AnnotatedRecord],
    evidence_threshold: float = DEFAULT_EVIDENCE_JACCARD,
) -> MetricsReport:
    """Micro-aggregate code, diagnosis, and evidence metrics over a batch
    of prediction dicts (the JSON-lines schema of the pipeline)."""
    gold_by_id = {r.record_id: r for r in gold_records}
    report = MetricsReport(evidence_jaccard_threshold=evidence_threshold)
    for pred in predictions:
        gold = gold_by_id.get(pred["record_id"])
        if gold is None:
            continue
        report.codes = report.codes + score_codes(set(pred["predicted_set"]), gold.gold_codes())
        pred_diagnoses = {d["diagnosis_span"]["text"] if d["diagnosis_span"]["grounded"] else d["diagnosis"] for d in pred["per_diagnosis"]}
        report.diagnoses = report.diagnoses + score_diagnoses(pred_diagnoses, gold.gold_diagnoses())
        pred_evidence = [e["sentence"] for d in pred["per_diagnosis"] for e in d["evidence"]]
        gold_evidence = [t for g in gold.gold for t in g.evidence_texts]
        report.evidence = report.evidence + score_evidence(
            pred_evidence, gold_evidence, gold.text, threshold=evidence_threshold
        )
    return report


def curve_at_k(
    results_by_k: dict[int, list[dict]],
    gold_records: list[AnnotatedRecord],
    ks: tuple[int, ...] = DEFAULT_K_SWEEP,
) -> dict[int, Counts]:
    """Micro code metrics per cutoff k; raises MissingK when a requested
    cutoff has no prediction set."""
    per_k: dict[int, Counts] = {}
    gold_by_id = {r.record_id: r for r in gold_records}
    for k in ks:
        if k not in results_by_k:
            raise MissingK(k)
        counts = Counts()
        for pred in results_by_k[k]:
            gold = gold_by_id.get(pred["record_id"])
            if gold is None:
                continue
            counts = counts + score_codes(set(pred["predicted_set"]), gold.gold_codes())
        per_k[k] = counts
    return per_k


def write_curve_csv(per_k: dict[int, Counts], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "tp", "fp", "fn", "precision", "recall", "f1"])
        for k in sorted(per_k):
            c = per_k[k]
            writer.writerow([k, c.tp, c.fp, c.fn, f"{c.precision:.6f}", f"{c.recall:.6f}", f"{c.f1:.6f}"])
