"""HTTP service for the coder-assist UI.

Exposes record browsing, suggestion generation (cached full-pipeline
runs), and persistence of coder selections. Suggestions carry at most
five codes per diagnosis to match the dropdown; the full ranking stays
in the pipeline audit output.
"""

from __future__ import annotations

import datetime
import json
import os
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from filelock import FileLock
from pydantic import BaseModel

from .errors import MedcoderError
from .ontology import validate_code_format
from .pipeline import (
    MODE_FULL,
    MedicalRecord,
    PipelineConfig,
    PipelineDeps,
    PredictionResult,
    run_record,
)

TOP_CODES_CAP = 5


class SelectionIn(BaseModel):
    diagnosis_index: int | None = None
    chosen_codes: list[str]
    entered_manually: bool = False
    coder_id: str = "anonymous"


@dataclass
class SelectionStore:
    """Append-only JSON-lines store of coder selections.

    Corrupt lines are quarantined to a sidecar file and skipped on load;
    the latest selection per (record, diagnosis) wins in the view.
    """

    path: str

    def __post_init__(self):
        self._lock = FileLock(self.path + ".lock")

    def append(self, selection: dict) -> dict:
        selection = dict(selection)
        selection.setdefault(
            "timestamp", datetime.datetime.now(datetime.timezone.utc).isoformat()
        )
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(selection, sort_keys=True, ensure_ascii=False))
                fh.write("\n")
        return selection

    def load_all(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        selections = []
        corrupt = []
        with self._lock:
            with open(self.path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        selections.append(json.loads(line))
                    except json.JSONDecodeError:
                        corrupt.append((line_no, line))
            if corrupt:
                with open(self.path + ".quarantine", "a", encoding="utf-8") as fh:
                    for line_no, line in corrupt:
                        fh.write(line if line.endswith("\n") else line + "\n")
        return selections

    def latest_view(self, record_id: str) -> list[dict]:
        latest: dict[object, dict] = {}
        for sel in self.load_all():
            if sel.get("record_id") != record_id:
                continue
            latest[sel.get("diagnosis_index")] = sel
        return [latest[key] for key in sorted(latest, key=lambda x: (x is None, x))]


def suggestions_from_result(result: PredictionResult, ontology) -> list[dict]:
    suggestions = []
    for i, pred in enumerate(result.per_diagnosis):
        extraction = pred.extraction
        top = []
        for code in pred.ranked.codes[:TOP_CODES_CAP]:
            top.append(
                {
                    "code": code,
                    "description": ontology.description_of(code),
                    "source": "pipeline",
                }
            )
        suggestions.append(
            {
                "record_id": result.record_id,
                "diagnosis_index": i,
                "diagnosis": extraction.diagnosis,
                "diagnosis_span": {
                    "text": extraction.diagnosis_span.text,
                    "start": extraction.diagnosis_span.start,
                    "end": extraction.diagnosis_span.end,
                    "grounded": extraction.diagnosis_span.grounded,
                },
                "evidence_spans": [
                    {
                        "text": e.span.text,
                        "start": e.span.start,
                        "end": e.span.end,
                        "grounded": e.span.grounded,
                    }
                    for e in extraction.evidence
                ],
                "top_codes": top,
            }
        )
    return suggestions


@dataclass
class ServiceState:
    records: dict[str, MedicalRecord]
    deps: PipelineDeps
    config: PipelineConfig
    store: SelectionStore
    suggestion_cache: dict[tuple[str, str], list[dict]] = field(default_factory=dict)
    record_locks: dict[str, threading.Lock] = field(default_factory=dict)
    running: set[str] = field(default_factory=set)
    _guard: threading.Lock = field(default_factory=threading.Lock)

    def lock_for(self, record_id: str) -> threading.Lock:
        with self._guard:
            return self.record_locks.setdefault(record_id, threading.Lock())


def create_app(state: ServiceState, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="medcoder coder-assist service")

    def _error(status: int, code: str, message: str):
        return HTTPException(status_code=status, detail={"code": code, "message": message})

    def _record_or_404(record_id: str) -> MedicalRecord:
        record = state.records.get(record_id)
        if record is None:
            raise _error(404, "unknown_record", f"no record {record_id}")
        return record

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/records")
    def list_records():
        cache_key_ids = {rid for rid, _cfg in state.suggestion_cache}
        return [
            {"record_id": rid, "has_suggestions": rid in cache_key_ids}
            for rid in sorted(state.records)
        ]

    @app.get("/api/records/{record_id}")
    def get_record(record_id: str):
        record = _record_or_404(record_id)
        return {"record_id": record.record_id, "text": record.text}

    @app.post("/api/records/{record_id}/suggest")
    def suggest(record_id: str, force: bool = False):
        record = _record_or_404(record_id)
        cache_key = (record_id, state.config.config_hash())
        if not force and cache_key in state.suggestion_cache:
            return state.suggestion_cache[cache_key]
        with state._guard:
            if record_id in state.running:
                raise _error(409, "suggest_running", f"suggest already running for {record_id}")
            state.running.add(record_id)
        try:
            with state.lock_for(record_id):
                result = run_record(record, state.config, state.deps)
                suggestions = suggestions_from_result(result, state.deps.ontology)
                state.suggestion_cache[cache_key] = suggestions
                return suggestions
        except MedcoderError as exc:
            raise _error(502, "provider_failure", str(exc))
        finally:
            with state._guard:
                state.running.discard(record_id)

    @app.get("/api/records/{record_id}/suggestions")
    def get_suggestions(record_id: str):
        _record_or_404(record_id)
        cache_key = (record_id, state.config.config_hash())
        if cache_key not in state.suggestion_cache:
            raise _error(404, "no_suggestions", f"no cached suggestions for {record_id}")
        return state.suggestion_cache[cache_key]

    @app.post("/api/records/{record_id}/selections")
    def post_selection(record_id: str, body: SelectionIn):
        _record_or_404(record_id)
        codes = [c.strip() for c in body.chosen_codes if c.strip()]
        invalid = [c for c in codes if not validate_code_format(c)]
        if invalid or not codes:
            raise _error(422, "invalid_codes", f"invalid code(s): {invalid or 'none given'}")
        stored = state.store.append(
            {
                "record_id": record_id,
                "diagnosis_index": body.diagnosis_index,
                "chosen_codes": codes,
                "entered_manually": body.entered_manually,
                "coder_id": body.coder_id,
            }
        )
        return stored

    @app.get("/api/records/{record_id}/selections")
    def get_selections(record_id: str):
        _record_or_404(record_id)
        return state.store.latest_view(record_id)

    @app.exception_handler(HTTPException)
    async def handle_http_error(_request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict):
            detail = {"code": "error", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def build_state(
    records: list[MedicalRecord],
    deps: PipelineDeps,
    store_path: str,
    config: PipelineConfig | None = None,
) -> ServiceState:
    return ServiceState(
        records={r.record_id: r for r in records},
        deps=deps,
        config=config or PipelineConfig(mode=MODE_FULL, k=TOP_CODES_CAP),
        store=SelectionStore(store_path),
    )
