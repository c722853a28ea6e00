"""Decision backends for source and crowd agents."""

from .base import (
    PolicyProvider,
    PolicyRequest,
    PolicyResponse,
    ReplySpec,
    Role,
    extract_json_block,
    parse_response,
)
from .remote import API_KEY_ENV, PromptTemplate, RemoteChatProvider, load_templates
from .rules import RuleBasedProvider
from .scripted import ScriptedProvider, neutral_response


def scripted_provider(schedule=()) -> ScriptedProvider:
    return ScriptedProvider(schedule)


def rule_based_provider(params=None) -> RuleBasedProvider:
    return RuleBasedProvider(params)


def remote_chat_provider(endpoint, model_name="llama3-8b", templates=None, timeout=60.0, max_retries=2, **kw):
    return RemoteChatProvider(endpoint, model_name, templates, timeout, max_retries, **kw)


__all__ = [
    "API_KEY_ENV",
    "PolicyProvider",
    "PolicyRequest",
    "PolicyResponse",
    "PromptTemplate",
    "RemoteChatProvider",
    "ReplySpec",
    "Role",
    "RuleBasedProvider",
    "ScriptedProvider",
    "extract_json_block",
    "load_templates",
    "neutral_response",
    "parse_response",
    "remote_chat_provider",
    "rule_based_provider",
    "scripted_provider",
]
