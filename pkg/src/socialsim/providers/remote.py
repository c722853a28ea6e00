"""Chat-completions client that renders role prompts and parses JSON answers.

Wire format (OpenAI-compatible):

    POST {endpoint}
    Authorization: Bearer $SOCIALSIM_API_KEY        (only if the variable is set)
    {"model": ..., "temperature": 0.1,
     "messages": [{"role": "system", ...}, {"role": "user", ...}]}

The answer is read from ``choices[0].message.content``; the first JSON
object in it is the structured result, everything else is kept as trace.
"""

from __future__ import annotations

import json
import logging
import os
import string
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Any, Callable, Mapping

import httpx

from ..errors import MalformedPolicyOutput, ProviderUnavailable
from .base import PolicyRequest, PolicyResponse, Role, extract_json_block, parse_response

log = logging.getLogger(__name__)

API_KEY_ENV = "SOCIALSIM_API_KEY"
DEFAULT_WORLD = "a public social media platform where events spread through views, likes, comments and shares"


@dataclass(frozen=True)
class PromptTemplate:
    role: Role
    version: str
    system: str
    user: str

    @property
    def placeholders(self) -> set[str]:
        names = set()
        for text in (self.system, self.user):
            names.update(f for _, f, _, _ in string.Formatter().parse(text) if f)
        return names

    def render(self, values: Mapping[str, Any]) -> list[dict[str, str]]:
        missing = self.placeholders - set(values)
        if missing:
            raise ValueError(f"{self.role.value} prompt needs {sorted(missing)}")
        vals = {k: _fmt(v) for k, v in values.items()}
        return [
            {"role": "system", "content": self.system.format_map(vals)},
            {"role": "user", "content": self.user.format_map(vals)},
        ]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return json.dumps(v, ensure_ascii=False, sort_keys=True)


def parse_template(role: Role, text: str) -> PromptTemplate:
    header, _, body = text.partition("\n")
    version = header.rsplit(" ", 1)[-1] if header.startswith("# template:") else "v0"
    if not header.startswith("# template:"):
        body = text
    system, sep, user = body.partition("### user\n")
    if not sep:
        system, user = "", body
    return PromptTemplate(role, version, system.strip(), user.strip())


def load_templates() -> dict[Role, PromptTemplate]:
    root = resources.files("socialsim") / "templates"
    return {role: parse_template(role, (root / f"{role.value}.txt").read_text(encoding="utf-8")) for role in Role}


class RemoteChatProvider:
    """Policy provider backed by a chat-completions endpoint.

    Transport errors, timeouts, 429 and 5xx responses are retried with
    exponential backoff; total wall time never exceeds
    ``timeout * (max_retries + 1)``. Output that cannot be parsed or violates
    a declared range raises :class:`MalformedPolicyOutput` immediately.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str = "llama3-8b",
        templates: Mapping[Role, PromptTemplate] | None = None,
        timeout: float = 60.0,
        max_retries: int = 2,
        *,
        temperature: float = 0.1,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        world_description: str = DEFAULT_WORLD,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.templates = dict(templates or load_templates())
        self.timeout = timeout
        self.max_retries = max_retries
        self.temperature = temperature
        self.backoff = backoff
        self.world_description = world_description
        self._sleep = sleep
        self._clock = clock
        self._slots = threading.BoundedSemaphore(max_in_flight)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def request_body(self, request: PolicyRequest) -> dict:
        values = {"world_description": self.world_description, **request.payload}
        messages = self.templates[request.role].render(values)
        return {"model": self.model_name, "temperature": self.temperature, "messages": messages}

    def respond(self, request: PolicyRequest) -> PolicyResponse:
        body = self.request_body(request)
        with self._slots:
            text = self._post(body)
        data, rest = extract_json_block(text)
        resp = parse_response(request.role, data, raw=text)
        if not resp.reasoning_trace and rest:
            resp = _with_trace(resp, rest)
        return resp

    def _post(self, body: dict) -> str:
        deadline = self._clock() + self.timeout * (self.max_retries + 1)
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            remaining = deadline - self._clock()
            if remaining <= 0:
                break
            try:
                r = self._client.post(self.endpoint, json=body, timeout=min(self.timeout, remaining))
            except httpx.TransportError as exc:
                last = exc
                log.warning("chat endpoint attempt %d failed: %s", attempt + 1, exc)
            else:
                if r.status_code == 429 or r.status_code >= 500:
                    last = ProviderUnavailable(f"HTTP {r.status_code}")
                    log.warning("chat endpoint attempt %d returned %d", attempt + 1, r.status_code)
                elif r.status_code >= 400:
                    raise ProviderUnavailable(f"chat endpoint rejected request: HTTP {r.status_code} {r.text[:200]}")
                else:
                    return _content(r)
            if attempt < self.max_retries:
                delay = self.backoff * 2**attempt
                if self._clock() + delay >= deadline:
                    break
                self._sleep(delay)
        raise ProviderUnavailable(f"chat endpoint unavailable after {self.max_retries + 1} attempts: {last}")


def _content(r: httpx.Response) -> str:
    try:
        content = r.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise MalformedPolicyOutput("response is not a chat completion", raw=r.text) from None
    if not isinstance(content, str):
        raise MalformedPolicyOutput("completion content is not text", raw=r.text)
    return content


def _with_trace(resp: PolicyResponse, trace: str) -> PolicyResponse:
    from dataclasses import replace

    return replace(resp, reasoning_trace=trace)
