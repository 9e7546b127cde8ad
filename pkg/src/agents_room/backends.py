"""Text-generation backends.

A backend is any object with ``generate(request) -> Generation``. Three kinds
ship here: an HTTP completion client speaking a minimal JSON contract, and two
deterministic mocks (echo and scripted) for tests and dry runs.

Wire contract for ``http`` profiles::

    POST <endpoint>
    {"model_id": ..., "prompt": ..., "max_output_tokens": ...,
     "temperature": ..., "seed": ...}
    -> {"text": ..., "input_tokens": ..., "output_tokens": ...}
"""

from __future__ import annotations

import configparser
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

import httpx

from .errors import (
    AuthMissing,
    BackendError,
    BackendUnavailable,
    ConfigError,
    EmptyPrompt,
    InputTooLong,
    ScriptMissing,
)
from .prompts import identify_agent

logger = logging.getLogger(__name__)

INPUT_BUCKETS = (1024, 2048, 4096, 8192)
DEFAULT_MAX_OUTPUT_TOKENS = 4096
TOKEN_SAFETY_FACTOR = 1.3
CONFIG_ENV = "AGENTS_ROOM_CONFIG"
# section of the config file holding CLI defaults rather than a profile
CLI_SECTION = "cli"

_WORD = re.compile(r"\S+")


def count_tokens(text: str) -> int:
    """Conservative token estimate: whitespace words times 1.3, rounded up."""
    return math.ceil(len(text.split()) * TOKEN_SAFETY_FACTOR)


def choose_input_bucket(token_count: int) -> int:
    if token_count < 0:
        raise ValueError("token_count must be nonnegative")
    for bucket in INPUT_BUCKETS:
        if token_count <= bucket:
            return bucket
    raise InputTooLong(f"{token_count} tokens exceed the largest input bucket {INPUT_BUCKETS[-1]}")


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    # None disables the input budget (used by the judge, whose inputs hold two
    # full stories).
    max_input_tokens: int | None = None
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperature: float = 1.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.prompt or not self.prompt.strip():
            raise EmptyPrompt("prompt is empty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be at least 1")
        if self.max_input_tokens is not None and self.max_input_tokens not in INPUT_BUCKETS:
            raise ValueError(f"max_input_tokens must be one of {INPUT_BUCKETS}")

    @classmethod
    def for_prompt(cls, prompt: str, **kwargs) -> GenerationRequest:
        """Request whose input budget is the smallest bucket fitting ``prompt``."""
        if not prompt or not prompt.strip():
            raise EmptyPrompt("prompt is empty")
        return cls(prompt, max_input_tokens=choose_input_bucket(count_tokens(prompt)), **kwargs)


@dataclass(frozen=True)
class Generation:
    text: str
    input_tokens: int
    output_tokens: int


class Backend(Protocol):
    name: str

    def generate(self, request: GenerationRequest) -> Generation: ...


def _check_budget(request: GenerationRequest) -> int:
    tokens = count_tokens(request.prompt)
    if request.max_input_tokens is not None and tokens > request.max_input_tokens:
        raise InputTooLong(
            f"prompt has ~{tokens} tokens, budget is {request.max_input_tokens}"
        )
    return tokens


def truncate_tokens(text: str, n: int) -> str:
    """Prefix of ``text`` holding its first ``n`` whitespace tokens, verbatim."""
    end = None
    for i, match in enumerate(_WORD.finditer(text)):
        if i == n - 1:
            end = match.end()
            break
    return text if end is None else text[:end]


class EchoBackend:
    """Returns the prompt, cut to ``max_output_tokens`` whitespace tokens."""

    def __init__(self, name: str = "mock-echo") -> None:
        self.name = name

    def generate(self, request: GenerationRequest) -> Generation:
        tokens = _check_budget(request)
        text = truncate_tokens(request.prompt, request.max_output_tokens)
        return Generation(text, tokens, len(text.split()))


# prompts that are not agent prompts, by their opening sentence
_FIXED_KEYS = (
    ("You will conduct a side-by-side evaluation.", "JUDGE"),
    ("Split the following story into sections:", "SPLIT"),
)


class ScriptedBackend:
    """Answers from a table keyed by the agent the prompt was rendered for.

    ``responses`` maps label names (``"CONFLICT"``) to text. ``default`` is
    used for unlisted agents and may contain ``{label}``; with neither, a
    missing entry raises :class:`ScriptMissing`. Prompts that match no agent
    (the single-call baseline) use the ``"E2E"`` entry; judge and story-split
    prompts use ``"JUDGE"`` and ``"SPLIT"``.
    """

    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        default: str | None = "out:{label}",
        name: str = "mock-scripted",
    ) -> None:
        self.name = name
        self.responses = {k.upper(): v for k, v in (responses or {}).items()}
        self.default = default

    def generate(self, request: GenerationRequest) -> Generation:
        tokens = _check_budget(request)
        key = next((k for opening, k in _FIXED_KEYS if request.prompt.startswith(opening)), None)
        if key is None:
            label = identify_agent(request.prompt)
            key = label.name if label is not None else "E2E"
        if key in self.responses:
            text = self.responses[key]
        elif self.default is not None:
            text = self.default.format(label=key)
        else:
            raise ScriptMissing(f"no scripted response for {key}")
        return Generation(text, tokens, len(text.split()))


@dataclass(frozen=True)
class BackendProfile:
    name: str
    kind: str
    endpoint: str | None = None
    model_id: str = ""
    auth_env: str | None = None
    retries: int = 3
    timeout: float = 120.0
    max_in_flight: int = 4
    backoff: float = 1.0
    options: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("http", "mock-echo", "mock-scripted"):
            raise ConfigError(f"profile {self.name}: unknown kind {self.kind!r}")
        if self.kind == "http" and not (self.endpoint and self.auth_env):
            raise ConfigError(f"profile {self.name}: http profiles need endpoint and auth_env")
        if self.max_in_flight < 1:
            raise ConfigError(f"profile {self.name}: max_in_flight must be positive")


class HttpBackend:
    """Client for the minimal JSON completion contract.

    Connection errors, timeouts, 429 and 5xx answers are retried with
    exponential backoff; other HTTP errors fail immediately.
    """

    def __init__(self, profile: BackendProfile, client: httpx.Client | None = None) -> None:
        self.profile = profile
        self.name = profile.name
        self._client = client
        self._slots = threading.BoundedSemaphore(profile.max_in_flight)

    def _token(self) -> str:
        value = os.environ.get(self.profile.auth_env or "")
        if not value:
            raise AuthMissing(
                f"profile {self.profile.name}: environment variable {self.profile.auth_env} is unset"
            )
        return value

    def generate(self, request: GenerationRequest) -> Generation:
        token = self._token()
        _check_budget(request)
        body = {
            "model_id": self.profile.model_id,
            "prompt": request.prompt,
            "max_output_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "seed": request.seed,
        }
        headers = {"Authorization": f"Bearer {token}"}
        client = self._client or httpx.Client(timeout=self.profile.timeout)
        last_error: Exception | None = None
        try:
            for attempt in range(self.profile.retries + 1):
                if attempt:
                    time.sleep(self.profile.backoff * 2 ** (attempt - 1))
                try:
                    with self._slots:
                        response = client.post(self.profile.endpoint, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last_error = exc
                    logger.warning("%s: attempt %d failed: %s", self.name, attempt + 1, exc)
                    continue
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = BackendError(f"HTTP {response.status_code}")
                    logger.warning(
                        "%s: attempt %d got HTTP %d", self.name, attempt + 1, response.status_code
                    )
                    continue
                if response.status_code >= 400:
                    raise BackendError(
                        f"{self.name}: HTTP {response.status_code}: {response.text[:200]}"
                    )
                try:
                    data = response.json()
                    return Generation(
                        str(data["text"]),
                        int(data.get("input_tokens", 0)),
                        int(data.get("output_tokens", 0)),
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    raise BackendError(f"{self.name}: malformed response body: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        raise BackendUnavailable(
            f"{self.name}: gave up after {self.profile.retries + 1} attempts: {last_error}"
        )


def build_backend(profile: BackendProfile) -> Backend:
    if profile.kind == "mock-echo":
        return EchoBackend(profile.name)
    if profile.kind == "mock-scripted":
        responses: dict[str, str] = {}
        path = profile.options.get("responses")
        if path:
            responses = json.loads(Path(path).read_text(encoding="utf-8"))
        default = profile.options.get("default", "out:{label}")
        return ScriptedBackend(responses, default or None, name=profile.name)
    return HttpBackend(profile)


def generate(profile: BackendProfile, request: GenerationRequest) -> Generation:
    return build_backend(profile).generate(request)


BUILTIN_PROFILES = {
    "mock-echo": BackendProfile("mock-echo", "mock-echo"),
    "mock-scripted": BackendProfile("mock-scripted", "mock-scripted"),
}

_INT_KEYS = ("retries", "max_in_flight")
_FLOAT_KEYS = ("timeout", "backoff")
_KNOWN_KEYS = {"kind", "endpoint", "model_id", "auth_env", *_INT_KEYS, *_FLOAT_KEYS}


def load_profiles(path: str | os.PathLike | None = None) -> dict[str, BackendProfile]:
    """Read backend profiles from an INI file, one section per profile.

    ``path`` falls back to ``$AGENTS_ROOM_CONFIG``, then ``./backends.ini``.
    The two mock profiles are always present unless the file redefines them.
    A ``[cli]`` section is not a profile and is skipped.
    Unrecognised keys are kept in ``options``.
    """
    profiles = dict(BUILTIN_PROFILES)
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
        if path is None and Path("backends.ini").is_file():
            path = "backends.ini"
    if path is None:
        return profiles
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read backend config {path}")
    for name in parser.sections():
        if name == CLI_SECTION:
            continue
        section = parser[name]
        if "kind" not in section:
            raise ConfigError(f"profile {name}: missing 'kind'")
        kwargs: dict = {"name": name}
        try:
            for key in _INT_KEYS:
                if key in section:
                    kwargs[key] = section.getint(key)
            for key in _FLOAT_KEYS:
                if key in section:
                    kwargs[key] = section.getfloat(key)
        except ValueError as exc:
            raise ConfigError(f"profile {name}: {exc}") from exc
        for key in ("kind", "endpoint", "model_id", "auth_env"):
            if key in section:
                kwargs[key] = section[key]
        kwargs["options"] = {k: v for k, v in section.items() if k not in _KNOWN_KEYS}
        profiles[name] = BackendProfile(**kwargs)
    return profiles
