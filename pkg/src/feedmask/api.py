"""HTTP facade over the engine.

Single-user service: every mutation flows through the engine's event log.
Errors map to one ApiError body per response; mutating endpoints accept an
X-Request-Id header and replay the original response on retry (the replay
cache is in-process only; the domain-level guards, like impressionId
idempotence and action status checks, do not depend on it).
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from feedmask.engine import Engine
from feedmask.errors import (
    ActionResolvedError,
    FeedmaskError,
    GatewayError,
    NoSnapshotError,
    SessionClosedError,
    StaleActionError,
    StorageFullError,
    TransportError,
    UserMismatchError,
)
from feedmask.pipeline import Impression, Item

MUTATING = {"POST", "PATCH", "DELETE", "PUT"}


class ItemIn(BaseModel):
    id: str = Field(min_length=1)
    title: str = Field(min_length=1)
    summary: str = ""
    category: str | None = None

    def to_item(self) -> Item:
        return Item(id=self.id, title=self.title, summary=self.summary, category=self.category)


class DisplayedIn(BaseModel):
    item: ItemIn
    clicked: bool


class ImpressionIn(BaseModel):
    impressionId: str = Field(min_length=1)
    userId: str = Field(min_length=1)
    timestamp: str = ""
    displayed: list[DisplayedIn] = Field(min_length=1)

    def to_impression(self) -> Impression:
        return Impression(
            impression_id=self.impressionId,
            user_id=self.userId,
            timestamp=self.timestamp,
            displayed=[(d.item.to_item(), d.clicked) for d in self.displayed],
        )


class FeedIn(BaseModel):
    items: list[ItemIn]


class RuleIn(BaseModel):
    text: str = Field(min_length=1)
    active: bool = True


class RulePatch(BaseModel):
    text: str = Field(min_length=1)


class ConversationIn(BaseModel):
    strategy: str


class MessageIn(BaseModel):
    text: str = Field(min_length=1)


class ConfirmIn(BaseModel):
    confirmed: bool
    editedText: str | None = None


def api_error(status: int, code: str, message: str, details: dict | None = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message, "details": details or {}}},
    )


class ReplayCache:
    """(method, path, request id) -> completed response, for retry safety."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str, str], tuple[int, bytes, str]] = {}

    def get(self, key):
        with self._lock:
            return self._entries.get(key)

    def put(self, key, value):
        with self._lock:
            self._entries[key] = value


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="feedmask", docs_url=None, redoc_url=None, openapi_url=None)
    # single-user local service; the webapp may be opened straight from disk
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    replay = ReplayCache()

    @app.middleware("http")
    async def request_id_replay(request: Request, call_next):
        request_id = request.headers.get("x-request-id")
        if request.method not in MUTATING or not request_id:
            return await call_next(request)
        key = (request.method, request.url.path, request_id)
        hit = replay.get(key)
        if hit is not None:
            status, body, media_type = hit
            return Response(content=body, status_code=status, media_type=media_type)
        response = await call_next(request)
        body = b"".join([chunk async for chunk in response.body_iterator])
        if response.status_code < 500:
            replay.put(key, (response.status_code, body, response.media_type))
        return Response(
            content=body,
            status_code=response.status_code,
            headers=dict(response.headers),
            media_type=response.media_type,
        )

    # -- error mapping --------------------------------------------------

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError):
        return api_error(400, "validation", "request body failed validation",
                         {"errors": exc.errors()})

    @app.exception_handler(StarletteHTTPException)
    async def on_http(request: Request, exc: StarletteHTTPException):
        code = {404: "not_found", 405: "method_not_allowed"}.get(exc.status_code, "http_error")
        return api_error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(KeyError)
    async def on_missing(request: Request, exc: KeyError):
        return api_error(404, "not_found", f"no such resource: {exc.args[0]}")

    @app.exception_handler(StaleActionError)
    async def on_stale(request: Request, exc: StaleActionError):
        return api_error(409, "stale_action", str(exc))

    @app.exception_handler(SessionClosedError)
    async def on_closed(request: Request, exc: SessionClosedError):
        return api_error(409, "session_closed", f"session {exc} is closed")

    @app.exception_handler(ActionResolvedError)
    async def on_resolved(request: Request, exc: ActionResolvedError):
        return api_error(409, "action_resolved", str(exc))

    @app.exception_handler(TransportError)
    async def on_transport(request: Request, exc: TransportError):
        return api_error(503, "gateway_unavailable", str(exc))

    @app.exception_handler(GatewayError)
    async def on_gateway(request: Request, exc: GatewayError):
        return api_error(503, "gateway_error", str(exc))

    @app.exception_handler(StorageFullError)
    async def on_storage(request: Request, exc: StorageFullError):
        return api_error(507, "storage_full", str(exc))

    @app.exception_handler(UserMismatchError)
    async def on_mismatch(request: Request, exc: UserMismatchError):
        return api_error(400, "user_mismatch", str(exc))

    @app.exception_handler(NoSnapshotError)
    async def on_nosnapshot(request: Request, exc: NoSnapshotError):
        return api_error(400, "no_snapshot", str(exc))

    @app.exception_handler(ValueError)
    async def on_value(request: Request, exc: ValueError):
        return api_error(400, "invalid", str(exc))

    @app.exception_handler(FeedmaskError)
    async def on_domain(request: Request, exc: FeedmaskError):
        return api_error(400, "domain_error", str(exc))

    # -- impressions ------------------------------------------------------

    @app.post("/events/impression")
    def post_impression(body: ImpressionIn):
        return engine.ingest_impression(body.to_impression())

    # -- filtering --------------------------------------------------------

    @app.post("/feed/filter")
    def post_filter(body: FeedIn):
        return engine.filter_items([entry.to_item() for entry in body.items])

    # -- rules --------------------------------------------------------------

    @app.get("/rules")
    def get_rules():
        return {"rules": engine.rules_json()}

    @app.post("/rules", status_code=201)
    def post_rule(body: RuleIn):
        return engine.create_rule(body.text, body.active).to_json()

    @app.patch("/rules/{rule_id}")
    def patch_rule(rule_id: str, body: RulePatch):
        return engine.update_rule(rule_id, body.text).to_json()

    @app.delete("/rules/{rule_id}")
    def delete_rule(rule_id: str):
        engine.delete_rule(rule_id)
        return {"deleted": rule_id}

    @app.post("/rules/{rule_id}/activate")
    def activate_rule(rule_id: str):
        return engine.set_rule_active(rule_id, True).to_json()

    @app.post("/rules/{rule_id}/deactivate")
    def deactivate_rule(rule_id: str):
        return engine.set_rule_active(rule_id, False).to_json()

    # -- profile ------------------------------------------------------------

    @app.get("/profile")
    def get_profile():
        return engine.profile_json()

    @app.get("/profile/graph")
    def get_graph():
        return engine.graph_json()

    # -- records and stats ----------------------------------------------------

    @app.get("/filter-records")
    def get_records(offset: int = 0, limit: int = 100):
        return engine.records_json(offset=offset, limit=limit)

    @app.get("/filter-stats")
    def get_stats():
        return {"stats": engine.stats_json()}

    # -- conversations -----------------------------------------------------

    @app.post("/conversations", status_code=201)
    def post_conversation(body: ConversationIn):
        return engine.open_conversation(body.strategy)

    @app.post("/conversations/{session_id}/messages")
    def post_message(session_id: str, body: MessageIn):
        return engine.converse(session_id, body.text)

    @app.get("/conversations/{session_id}")
    def get_conversation(session_id: str):
        return engine.session_json(session_id)

    # -- actions ---------------------------------------------------------------

    @app.get("/actions/pending")
    def get_pending():
        return {"actions": engine.pending_actions_json()}

    @app.post("/actions/{action_id}/confirm")
    def confirm_action(action_id: str, body: ConfirmIn):
        return engine.resolve_action(action_id, body.confirmed, body.editedText)

    return app
