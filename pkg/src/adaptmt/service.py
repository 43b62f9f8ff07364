"""HTTP facade over the translation pipeline.

All routes live under /v1 (health at GET /health). State is single-process:
each project owns a TranslationMemory, a pipeline bound to the app-wide
providers, an optional glossary, and a write-ahead JSONL log that is
replayed on startup. A per-project writer lock serializes ingest/approve/
compile; translation reads an immutable index snapshot and needs no lock.

Request bodies are parsed by hand rather than through response-model
machinery so invalid input consistently maps to 400 (or 422 with row
numbers for malformed TM uploads).
"""

from __future__ import annotations

import json
import threading
import uuid
import warnings as pywarnings
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from adaptmt.gateway import GenerationConfig
from adaptmt.languages import LanguageError, LanguagePair
from adaptmt.pipeline import (
    PipelineError,
    TranslationPipeline,
    strategy_from_dict,
)
from adaptmt.prompts import PromptError
from adaptmt.retrieval import RetrievalConfig
from adaptmt.terminology import (
    EXTRACTION_TEMPERATURE,
    Glossary,
    GlossaryConfig,
    ParsedTerm,
    TermPair,
    aggregate_candidates,
    compile_glossary,
    extract_terms_batch,
    parse_term_lines,
)
from adaptmt.tm import IngestError, TMError, TranslationMemory, parse_records


@dataclass
class ProjectState:
    project_id: str
    tm: TranslationMemory
    pipeline: TranslationPipeline
    glossary: Glossary | None = None
    parsed_terms: list[ParsedTerm] = field(default_factory=list)
    extraction_done: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)
    extraction_lock: threading.Lock = field(default_factory=threading.Lock)
    wal_path: Path | None = None

    def append_wal(self, record: dict) -> None:
        if self.wal_path is None:
            return
        with open(self.wal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def create_app(
    provider,
    mt_provider=None,
    generation: GenerationConfig | None = None,
    state_dir: str | None = None,
    display_names: dict[str, str] | None = None,
) -> FastAPI:
    """Build the service bound to concrete providers.

    state_dir enables durability: every mutating call appends to the
    project's JSONL log, and existing logs are replayed here before the app
    serves its first request.
    """
    app = FastAPI(title="adaptmt", docs_url=None, redoc_url=None)
    projects: dict[str, ProjectState] = {}
    # Exposed for operational introspection and white-box tests; handlers only
    # ever touch it through the closure.
    app.state.projects = projects
    default_generation = generation or GenerationConfig(model="offline")

    def create_project(
        source_lang: str,
        target_lang: str,
        multiplier: int = 0,
        project_id: str | None = None,
        wal: bool = True,
    ) -> ProjectState:
        lang = LanguagePair(source_lang, target_lang, multiplier)
        project_id = project_id or uuid.uuid4().hex[:12]
        tm = TranslationMemory(lang, project_id=project_id)
        state = ProjectState(
            project_id, tm, TranslationPipeline(tm, provider, mt_provider)
        )
        if state_dir is not None:
            state.wal_path = Path(state_dir) / f"{project_id}.jsonl"
        if wal:
            state.append_wal(
                {
                    "op": "create",
                    "project_id": project_id,
                    "source_lang": source_lang,
                    "target_lang": target_lang,
                    "multiplier": lang.length_multiplier,
                }
            )
        projects[project_id] = state
        return state

    def replay(path: Path) -> None:
        state: ProjectState | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                op = record["op"]
                if op == "create":
                    state = create_project(
                        record["source_lang"],
                        record["target_lang"],
                        record.get("multiplier", 0),
                        project_id=record["project_id"],
                        wal=False,
                    )
                    state.wal_path = path
                elif state is None:
                    raise TMError(f"write-ahead log {path} does not start with create")
                elif op == "add":
                    state.tm.add(
                        record["source"],
                        record.get("target"),
                        record.get("origin", "approved"),
                    )
                elif op == "glossary":
                    state.glossary = Glossary(
                        [
                            TermPair(
                                e["source"],
                                e["target"],
                                freq=e["freq"],
                                ngram_len=e["ngram_len"],
                            )
                            for e in record["entries"]
                        ]
                    )
                    state.pipeline.glossary = state.glossary
                    state.extraction_done = True

    if state_dir is not None:
        Path(state_dir).mkdir(parents=True, exist_ok=True)
        for path in sorted(Path(state_dir).glob("*.jsonl")):
            replay(path)

    def get_project(project_id: str) -> ProjectState:
        state = projects.get(project_id)
        if state is None:
            raise HTTPException(404, f"unknown project {project_id}")
        return state

    # ------------------------------------------------------------------
    # Routes
    # ------------------------------------------------------------------

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/v1/projects")
    async def list_projects():
        return [
            {
                "project_id": s.project_id,
                "source_lang": s.tm.lang.source_lang,
                "target_lang": s.tm.lang.target_lang,
                "segments": len(s.tm),
                "glossary_entries": len(s.glossary) if s.glossary else 0,
            }
            for s in projects.values()
        ]

    @app.post("/v1/projects", status_code=201)
    async def post_project(request: Request):
        body = await _json_body(request)
        try:
            state = create_project(
                str(body.get("source_lang", "")),
                str(body.get("target_lang", "")),
                int(body.get("multiplier", 0) or 0),
            )
        except (LanguageError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        return {"project_id": state.project_id}

    @app.post("/v1/projects/{project_id}/tm")
    async def post_tm(project_id: str, request: Request, format: str = "jsonl"):
        state = get_project(project_id)
        raw = (await request.body()).decode("utf-8")
        if not raw.strip():
            return JSONResponse(
                status_code=422, content={"detail": "empty body", "rows": []}
            )
        try:
            records = parse_records(raw, format)
        except IngestError as exc:
            return JSONResponse(
                status_code=422, content={"detail": str(exc), "rows": exc.rows}
            )
        except TMError as exc:
            raise HTTPException(400, str(exc))
        with state.lock:
            before = len(state.tm.pairs)
            kept, dropped = state.tm.extend(records)
            for pair in state.tm.pairs[before:]:
                state.append_wal(
                    {
                        "op": "add",
                        "source": pair.source,
                        "target": pair.target,
                        "origin": pair.origin,
                    }
                )
            state.pipeline.index()  # rebuild before responding
        return {"ingested": kept, "dropped": dropped}

    @app.get("/v1/projects/{project_id}/matches")
    async def get_matches(project_id: str, q: str = "", k: int = 5):
        state = get_project(project_id)
        if not q.strip():
            raise HTTPException(400, "query parameter q must be non-empty")
        if len(state.tm) == 0:
            raise HTTPException(400, "translation memory is empty")
        effective_k = max(1, min(k, len(state.tm)))
        matches = state.pipeline.index().retrieve(
            q, RetrievalConfig(top_k=effective_k)
        )
        return {
            "matches": [
                {
                    "id": m.pair.id,
                    "source": m.pair.source,
                    "target": m.pair.target,
                    "origin": m.pair.origin,
                    "score": m.score,
                }
                for m in matches
            ]
        }

    @app.post("/v1/projects/{project_id}/approve")
    async def post_approve(project_id: str, request: Request):
        state = get_project(project_id)
        body = await _json_body(request)
        with state.lock:
            try:
                pair = state.pipeline.approve(
                    str(body.get("source", "")), str(body.get("target", ""))
                )
            except TMError as exc:
                raise HTTPException(400, str(exc))
            state.append_wal(
                {
                    "op": "add",
                    "source": pair.source,
                    "target": pair.target,
                    "origin": pair.origin,
                }
            )
        return {"pair_id": pair.id}

    @app.post("/v1/projects/{project_id}/translate")
    async def post_translate(project_id: str, request: Request, debug: int = 0):
        state = get_project(project_id)
        body = await _json_body(request)
        source = str(body.get("source", ""))
        if not source.strip():
            raise HTTPException(400, "source must be non-empty")
        try:
            strategy = strategy_from_dict(
                body.get("strategy") or {}, default_generation, display_names
            )
        except (ValueError, KeyError) as exc:
            raise HTTPException(400, f"invalid strategy: {exc}")
        state.pipeline.glossary = state.glossary
        try:
            result = state.pipeline.translate(source, strategy)
        except PipelineError as exc:
            status = 502 if exc.stage in ("gateway", "mt") else 400
            return JSONResponse(
                status_code=status, content={"detail": str(exc), "stage": exc.stage}
            )
        except (PromptError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        if result.error is not None:
            return JSONResponse(
                status_code=502,
                content={"detail": result.error, "stage": "gateway"},
            )
        payload = result.to_dict()
        if not debug:
            payload.pop("prompt")
        return payload

    @app.post("/v1/projects/{project_id}/glossary/compile")
    async def post_glossary_compile(project_id: str, request: Request):
        state = get_project(project_id)
        body = await _json_body(request)
        if len(state.tm) == 0:
            raise HTTPException(400, "translation memory is empty")
        if not state.extraction_lock.acquire(blocking=False):
            return JSONResponse(
                status_code=409, content={"detail": "terminology extraction pending"}
            )
        try:
            if not state.extraction_done:
                _extract_project_terms(state, provider, default_generation)
            cfg = GlossaryConfig(
                min_freq=int(body.get("min_freq", 2)),
                max_ngram=int(body.get("max_ngram", 5)),
                max_terms_per_segment=int(body.get("max_terms", 5)),
            )
            with pywarnings.catch_warnings():
                pywarnings.simplefilter("ignore")
                glossary = compile_glossary(
                    aggregate_candidates(state.parsed_terms), cfg
                )
            with state.lock:
                state.glossary = glossary
                state.pipeline.glossary = glossary
                state.append_wal(
                    {
                        "op": "glossary",
                        "entries": [
                            {
                                "source": t.source,
                                "target": t.target,
                                "freq": t.freq,
                                "ngram_len": t.ngram_len,
                            }
                            for t in glossary.entries
                        ],
                    }
                )
        finally:
            state.extraction_lock.release()
        return {"entries": len(glossary)}

    @app.get("/v1/projects/{project_id}/glossary")
    async def get_glossary(project_id: str):
        state = get_project(project_id)
        if state.glossary is None:
            raise HTTPException(404, "no glossary compiled for this project")
        lines = [
            f"{t.source}\t{t.target}\t{t.freq}\t{t.ngram_len}"
            for t in state.glossary.entries
        ]
        return PlainTextResponse(
            "\n".join(lines) + ("\n" if lines else ""),
            media_type="text/tab-separated-values; charset=utf-8",
        )

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise HTTPException(400, "body must be valid JSON")
    if not isinstance(body, dict):
        raise HTTPException(400, "body must be a JSON object")
    return body


def _extract_project_terms(
    state: ProjectState, provider, generation: GenerationConfig
) -> None:
    """Run LLM term extraction over the whole TM and cache the parsed lines."""
    extraction_cfg = replace(
        generation, temperature=EXTRACTION_TEMPERATURE, top_p=1.0, stop=None
    )
    pairs = [p for p in state.tm.pairs if p.target]
    with pywarnings.catch_warnings():
        pywarnings.simplefilter("ignore")
        raw = extract_terms_batch(pairs, state.tm.lang, provider, extraction_cfg)
    parsed_all: list[ParsedTerm] = []
    for pair, lines in zip(pairs, raw):
        parsed, _malformed = parse_term_lines(lines, "=", pair.source, pair.target)
        parsed_all.extend(parsed)
    state.parsed_terms = parsed_all
    state.extraction_done = True
