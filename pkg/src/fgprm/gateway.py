"""Provider-agnostic chat-completion access: request digests, a directory
cache, retry with backoff, a scripted offline provider, prompt templates, and
the explanation-then-Yes/No verdict parser."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "FGPRM_API_KEY"

_RETRY_BACKOFF = (1.0, 4.0, 16.0)


class ProviderError(RuntimeError):
    """Remote provider failed; ``status`` is the HTTP status or None for transport errors."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status

    @property
    def retryable(self) -> bool:
        return self.status is None or self.status == 429 or self.status >= 500


class MockMiss(KeyError):
    """The scripted provider has no response for this request digest."""


class ProtocolViolation(ValueError):
    """The response's last line is neither yes nor no."""


class MissingSlot(KeyError):
    """A template placeholder was not supplied."""


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request. Messages alternate roles starting with user."""

    messages: tuple[tuple[str, str], ...]
    model_id: str
    system_prompt: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for i, (role, _content) in enumerate(self.messages):
            expected = "user" if i % 2 == 0 else "assistant"
            if role != expected:
                raise ValueError(
                    f"message {i} has role {role!r}; roles must alternate "
                    "starting with user"
                )
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def request_digest(provider_kind: str, request: ChatRequest) -> str:
    """Content address of (provider kind, full request)."""
    payload = json.dumps(
        {
            "kind": provider_kind,
            "system": request.system_prompt,
            "messages": list(request.messages),
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "seed": request.seed,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class MockScriptedProvider:
    """Offline provider answering from a digest-keyed table; raises on misses
    so that tests stay total."""

    script: Mapping[str, str]
    kind: str = "mock_scripted"

    def send(self, request: ChatRequest) -> str:
        digest = request_digest(self.kind, request)
        try:
            return self.script[digest]
        except KeyError:
            raise MockMiss(
                f"no scripted response for digest {digest[:12]}... "
                f"(model {request.model_id!r})"
            ) from None


def _default_transport(
    url: str, headers: dict, payload: dict, timeout: float
) -> tuple[int, dict]:
    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise ProviderError(f"transport failure: {exc}", status=None) from exc
    try:
        body = resp.json()
    except ValueError:
        body = {}
    return resp.status_code, body


@dataclass
class RemoteHttpProvider:
    """Chat-completion provider speaking an OpenAI-style HTTP wire format.

    The bearer token is read from the ``FGPRM_API_KEY`` environment variable.
    ``transport`` is injectable for tests.
    """

    endpoint: str
    timeout: float = 60.0
    transport: Callable[[str, dict, dict, float], tuple[int, dict]] = field(
        default=_default_transport
    )
    kind: str = "remote_http"

    def send(self, request: ChatRequest) -> str:
        api_key = os.environ.get(API_KEY_ENV, "")
        if not api_key:
            raise ProviderError(f"{API_KEY_ENV} is not set", status=None)
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.extend(
            {"role": role, "content": content} for role, content in request.messages
        )
        payload = {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {"Authorization": f"Bearer {api_key}"}
        status, body = self.transport(self.endpoint, headers, payload, self.timeout)
        if status != 200:
            raise ProviderError(f"provider returned status {status}", status=status)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}", status=200)


Provider = Union[MockScriptedProvider, RemoteHttpProvider]


class ResponseCache:
    """Directory cache: one file per request digest holding the verbatim response."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.txt"

    def get(self, digest: str) -> Optional[str]:
        path = self._path(digest)
        if path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def put(self, digest: str, response: str) -> None:
        # Last-writer-wins is safe: identical keys carry identical values.
        self._path(digest).write_text(response, encoding="utf-8")


def complete(
    provider: Provider,
    request: ChatRequest,
    cache: Optional[ResponseCache] = None,
    *,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Run one completion, consulting the cache first.

    Remote transient failures (transport errors, 429, 5xx) are retried up to
    three times with 1s/4s/16s backoff; other errors propagate immediately.
    """
    digest = request_digest(provider.kind, request)
    if cache is not None:
        cached = cache.get(digest)
        if cached is not None:
            return cached

    last_error: Optional[ProviderError] = None
    for attempt in range(1 + len(_RETRY_BACKOFF)):
        try:
            response = provider.send(request)
            break
        except ProviderError as exc:
            last_error = exc
            if not exc.retryable or attempt == len(_RETRY_BACKOFF):
                raise
            delay = _RETRY_BACKOFF[attempt]
            log.warning(
                "provider error (%s), retrying in %.0fs", exc, delay
            )
            sleep(delay)
    else:  # pragma: no cover - loop always breaks or raises
        raise last_error  # type: ignore[misc]

    if cache is not None:
        cache.put(digest, response)
    return response


def complete_many(
    provider: Provider,
    requests_: Sequence[ChatRequest],
    cache: Optional[ResponseCache] = None,
    *,
    max_in_flight: int = 4,
) -> list[str]:
    """Run completions with bounded concurrency, preserving input order."""
    if max_in_flight <= 1 or len(requests_) <= 1:
        return [complete(provider, r, cache) for r in requests_]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(lambda r: complete(provider, r, cache), requests_))


_VERDICT_STRIP = " \t\"'`.,!?:;()[]{}«»‘’“”*"


def parse_yes_no(response: str) -> bool:
    """Read the verdict from the last non-empty line of a response.

    The protocol puts an explanation first and a bare Yes/No on the final
    line. Raises :class:`ProtocolViolation` for anything else; there is no
    silent defaulting.
    """
    lines = [line for line in response.splitlines() if line.strip()]
    if not lines:
        raise ProtocolViolation("empty response")
    verdict = lines[-1].strip(_VERDICT_STRIP).casefold()
    if verdict == "yes":
        return True
    if verdict == "no":
        return False
    raise ProtocolViolation(f"last line is neither yes nor no: {lines[-1]!r}")


JUDGMENT_TEMPLATE = (
    "[Question]\n{question}\n"
    "[Reasoning Steps]\n{steps}\n"
    "[Instruction]\n{instruction}"
)

QUERY_TEMPLATE = (
    "[Question]\n{question}\n\n"
    "[Correct Reasoning Steps]\n{steps}\n\n"
    "{output_format}"
)

TEMPLATES: dict[str, str] = {
    "judgment": JUDGMENT_TEMPLATE,
    "injection_query": QUERY_TEMPLATE,
}

_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def register_template(name: str, template: str) -> None:
    TEMPLATES[name] = template


def render_template(template_name: str, slots: Mapping[str, object]) -> str:
    """Substitute ``{slot}`` placeholders; a missing slot is an error and a
    placeholder is never emitted literally. Slot values are not re-scanned."""
    try:
        template = TEMPLATES[template_name]
    except KeyError:
        raise MissingSlot(f"unknown template {template_name!r}") from None
    for name in _PLACEHOLDER.findall(template):
        if name not in slots:
            raise MissingSlot(name)
    return _PLACEHOLDER.sub(lambda m: str(slots[m.group(1)]), template)
