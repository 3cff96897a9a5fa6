"""HTTP service exposing validation and recommendation endpoints.

Function-calling LLM hosts bind to the published OpenAPI document, so
the surface is versioned under /v1 and evolves additively only.
Similarity scores are serialized as fixed-precision decimal strings to
keep response bodies byte-reproducible across platforms.

Profiles: "test" wires a scripted mock suggester and Replay-mode LOC
fixtures (no network anywhere); "live" wires the chat-completion
adapter configured from LCSH_LLM_* and a live LOC client.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from collections import deque
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from .loc import LocClient, LocLookupError, LookupConfig, Mode
from .model import CandidateTerm
from .pipeline import (
    BibDescription,
    EmptySuggestion,
    InvalidBib,
    SessionConfig,
    SuggesterError,
    format_score,
    outcome_to_dict,
    run_session,
    validate_candidates,
)
from .suggesters import HttpChatSuggester, LlmEndpointConfig, MockSuggester

ENV_MOCK_SCRIPT = "LCSH_MOCK_SCRIPT"
ENV_CORS_ORIGINS = "LCSH_API_CORS_ORIGINS"
ENV_API_TOKEN = "LCSH_API_TOKEN"

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8745


class Alternative(BaseModel):
    label: str
    uri: str
    score: str  # fixed-precision decimal string


class ValidateResult(BaseModel):
    term: str
    status: str
    authorized_label: str | None = None
    uri: str | None = None
    alternatives: list[Alternative] = []


class ValidateRequest(BaseModel):
    terms: list[str] = Field(min_length=1, max_length=20)


class ValidateResponse(BaseModel):
    results: list[ValidateResult]


class SessionOverrides(BaseModel):
    max_rounds: int | None = None
    partial_threshold: float | None = None
    accept_threshold: float | None = None
    max_controlled: int | None = None
    max_uncontrolled: int | None = None


class RecommendRequest(BaseModel):
    title: str = Field(min_length=1)
    contributors: list[str] = []
    summary: str | None = None
    table_of_contents: str | None = None
    language_of_work: str | None = None
    notes: str | None = None
    config: SessionOverrides | None = None


class ControlledEntry(BaseModel):
    heading: str
    uri: str
    link: str  # always equal to uri; explicit for step-6 exploration
    justification: str


class AuditAlternative(BaseModel):
    label: str
    uri: str
    score: str


class AuditOutcome(BaseModel):
    term: str
    round: int
    status: str
    authorized_label: str | None = None
    uri: str | None = None
    alternatives: list[AuditAlternative] = []
    error: str | None = None


class RecommendResponse(BaseModel):
    controlled: list[ControlledEntry]
    uncontrolled: list[str]
    rounds_used: int
    audit: list[list[AuditOutcome]]


class HealthResponse(BaseModel):
    status: str
    loc_reachable: bool


class _RateGate:
    """Minimal sliding-window limiter for the optional service-level cap."""

    def __init__(self, per_minute: int):
        self.per_minute = per_minute
        self._events: deque[float] = deque()
        self._lock = threading.Lock()

    def allow(self) -> bool:
        now = time.monotonic()
        with self._lock:
            while self._events and now - self._events[0] > 60.0:
                self._events.popleft()
            if len(self._events) >= self.per_minute:
                return False
            self._events.append(now)
            return True


def _error_body(error: str, detail: str) -> dict:
    return {"error": error, "detail": detail}


def load_mock_script(path: str | Path) -> dict:
    """Load a suggester script file: {title: [[round-0 terms], [round-1 terms], ...]}."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _build_loc_client(profile: str, loc_config: LookupConfig | None, transport=None) -> LocClient:
    if loc_config is not None:
        return LocClient(loc_config, transport=transport)
    if profile == "test":
        fixture_dir = os.environ.get("LCSH_LOC_FIXTURE_DIR") or tempfile.mkdtemp(
            prefix="lcsh-empty-fixtures-"
        )
        cfg = LookupConfig.from_env(mode=Mode.REPLAY, fixture_dir=Path(fixture_dir))
    else:
        cfg = LookupConfig.from_env()
    return LocClient(cfg, transport=transport)


def create_app(
    profile: str = "test",
    loc_config: LookupConfig | None = None,
    mock_script: dict | None = None,
    session_config: SessionConfig | None = None,
    cors_origins: list[str] | None = None,
    auth_token: str | None = None,
    rate_limit_per_minute: int | None = None,
    suggester_factory=None,
    loc_transport=None,
) -> FastAPI:
    if profile not in ("test", "live"):
        raise ValueError(f"unknown profile {profile!r}")

    client = _build_loc_client(profile, loc_config, transport=loc_transport)
    base_session = session_config or SessionConfig(degradable_lookups=True)

    if suggester_factory is None:
        if profile == "test":
            script = mock_script
            if script is None and os.environ.get(ENV_MOCK_SCRIPT):
                script = load_mock_script(os.environ[ENV_MOCK_SCRIPT])
            script = script or {}
            suggester_factory = lambda: MockSuggester(script)  # noqa: E731
        else:
            llm = HttpChatSuggester(LlmEndpointConfig.from_env())
            suggester_factory = lambda: llm  # noqa: E731

    token = auth_token if auth_token is not None else os.environ.get(ENV_API_TOKEN)
    gate = _RateGate(rate_limit_per_minute) if rate_limit_per_minute else None

    app = FastAPI(
        title="LCSH validation loop",
        version="0.1.0",
        description=(
            "Validates candidate subject headings against the Library of "
            "Congress Linked Data Service and runs the full "
            "suggest/validate/refine loop over bibliographic descriptions."
        ),
        openapi_url="/openapi.json",
        docs_url="/docs",
        redoc_url=None,
    )
    app.state.loc_client = client
    app.state.profile = profile

    origins = cors_origins
    if origins is None:
        env_origins = os.environ.get(ENV_CORS_ORIGINS, "")
        origins = [o.strip() for o in env_origins.split(",") if o.strip()] or ["*"]
    app.add_middleware(
        CORSMiddleware,
        allow_origins=origins,
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content=_error_body("bad_request", str(exc.errors())))

    @app.exception_handler(StarletteHTTPException)
    async def _http_handler(request: Request, exc: StarletteHTTPException):
        detail = exc.detail if isinstance(exc.detail, str) else json.dumps(exc.detail)
        return JSONResponse(status_code=exc.status_code, content=_error_body("http_error", detail))

    @app.exception_handler(LocLookupError)
    async def _loc_handler(request: Request, exc: LocLookupError):
        return JSONResponse(status_code=502, content=_error_body("loc_unreachable", str(exc)))

    @app.middleware("http")
    async def _guards(request: Request, call_next):
        if request.url.path.startswith("/v1/") and request.method != "OPTIONS":
            if token and request.headers.get("x-auth-token") != token:
                return JSONResponse(
                    status_code=401, content=_error_body("unauthorized", "missing or bad token")
                )
            if gate and not gate.allow():
                return JSONResponse(
                    status_code=429, content=_error_body("rate_limited", "service request cap hit")
                )
        return await call_next(request)

    @app.post("/v1/validate", response_model=ValidateResponse)
    def validate(body: ValidateRequest):
        cleaned = [t.strip() for t in body.terms]
        if any(not t or not _norm(t) for t in cleaned):
            return JSONResponse(
                status_code=400, content=_error_body("bad_request", "terms must be non-empty")
            )
        terms = [CandidateTerm(text=t) for t in cleaned]
        outcomes = validate_candidates(terms, client, base_session)
        by_key = { _norm(o.candidate.text): o for o in outcomes }
        results = []
        for term in cleaned:  # one result per request term, order preserved
            outcome = by_key[_norm(term)]
            results.append(
                ValidateResult(
                    term=term,
                    status=outcome.status.value,
                    authorized_label=outcome.authorized_label,
                    uri=outcome.resolved_uri,
                    alternatives=[
                        Alternative(label=m.label, uri=m.uri, score=format_score(m.score.value))
                        for m in outcome.matches
                    ],
                )
            )
        return ValidateResponse(results=results)

    @app.post("/v1/recommend", response_model=RecommendResponse)
    def recommend(body: RecommendRequest):
        bib = BibDescription(
            title=body.title,
            contributors=tuple(body.contributors),
            summary=body.summary,
            table_of_contents=body.table_of_contents,
            language_of_work=body.language_of_work,
            notes=body.notes,
        )
        cfg = _merge_config(base_session, body.config)
        try:
            rec = run_session(bib, suggester_factory(), client, cfg)
        except InvalidBib as exc:
            return JSONResponse(status_code=400, content=_error_body("bad_request", str(exc)))
        except EmptySuggestion as exc:
            return JSONResponse(
                status_code=503, content=_error_body("empty_suggestion", str(exc))
            )
        except SuggesterError as exc:
            return JSONResponse(
                status_code=503, content=_error_body("suggester_unavailable", str(exc))
            )
        return RecommendResponse(
            controlled=[
                ControlledEntry(
                    heading=c.heading, uri=c.uri, link=c.uri, justification=c.justification
                )
                for c in rec.controlled
            ],
            uncontrolled=list(rec.uncontrolled),
            rounds_used=rec.rounds_used,
            audit=[
                [AuditOutcome(**outcome_to_dict(o)) for o in round_outcomes]
                for round_outcomes in rec.audit
            ],
        )

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok", loc_reachable=_loc_reachable(client))

    return app


def _norm(text: str) -> str:
    from .model import normalize_label

    return normalize_label(text)


def _merge_config(base: SessionConfig, overrides: SessionOverrides | None) -> SessionConfig:
    if overrides is None:
        return base
    fields = {}
    for name in (
        "max_rounds",
        "partial_threshold",
        "accept_threshold",
        "max_controlled",
        "max_uncontrolled",
    ):
        value = getattr(overrides, name)
        fields[name] = value if value is not None else getattr(base, name)
    fields["degradable_lookups"] = base.degradable_lookups
    return SessionConfig(**fields)


def _loc_reachable(client: LocClient) -> bool:
    if client.cfg.mode is Mode.REPLAY:
        return True  # fixtures count as reachable
    try:
        client.suggest("history")
        return True
    except LocLookupError:
        return False


def serve(
    host: str = DEFAULT_HOST,
    port: int = DEFAULT_PORT,
    profile: str = "test",
    **app_kwargs,
) -> None:
    """Blocking launcher used by the CLI."""
    import uvicorn

    uvicorn.run(create_app(profile=profile, **app_kwargs), host=host, port=port)
