"""Model access layer: chat backends, structured output, embeddings."""

from feedmask.gateway.core import Gateway, extract_json
from feedmask.gateway.embedding import DEFAULT_DIM, HashEmbedder, StaticEmbedder, cosine
from feedmask.gateway.http import HttpBackend, HttpEmbedder, RateLimiter
from feedmask.gateway.messages import (
    CORRECTION_PROMPT,
    ChatRequest,
    ChatResponse,
    Message,
    chat,
)
from feedmask.gateway.schemas import SchemaRegistry, default_registry, slate_choice_schema
from feedmask.gateway.stub import ScriptedStub
from feedmask.gateway.templates import SYSTEM_PROMPT, render

__all__ = [
    "CORRECTION_PROMPT",
    "DEFAULT_DIM",
    "SYSTEM_PROMPT",
    "ChatRequest",
    "ChatResponse",
    "Gateway",
    "HashEmbedder",
    "HttpBackend",
    "HttpEmbedder",
    "Message",
    "RateLimiter",
    "SchemaRegistry",
    "ScriptedStub",
    "StaticEmbedder",
    "chat",
    "cosine",
    "default_registry",
    "extract_json",
    "render",
    "slate_choice_schema",
]
