"""Prompt construction, response grammars and LLM backends."""

from .backends import (Backend, Fallback, FixtureEntry, HttpBackend, HttpBackendConfig, LlmResponse,
                       ScriptedBackend, ask, complete)
from .prompts import LlmRequest, PromptKind, make_request

__all__ = [
    "Backend", "Fallback", "FixtureEntry", "HttpBackend", "HttpBackendConfig", "LlmRequest", "LlmResponse",
    "PromptKind", "ScriptedBackend", "ask", "complete", "make_request",
]
