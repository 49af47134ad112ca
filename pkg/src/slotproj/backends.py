"""Pluggable translation of tagged sentences.

A backend turns one :class:`TranslationRequest` into a candidate
translation. The production backend posts to a completions-style HTTP
endpoint; three deterministic mocks (identity, scramble, faulty) make every
pipeline path testable offline. Mock outputs depend only on
(tagged_text, attempt, seed), so results cannot vary with worker
interleaving.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass

import requests

from .errors import SlotprojError
from .tagging import MARKER_PATTERN

__all__ = [
    "BackendConfig",
    "DEFAULT_PROMPT_TEMPLATE",
    "FaultyBackend",
    "HttpBackend",
    "IdentityBackend",
    "MalformedResponse",
    "MissingPlaceholder",
    "RateLimited",
    "ScrambleBackend",
    "ScriptedBackend",
    "ThrottledBackend",
    "TranslationBackend",
    "TranslationRequest",
    "TranslationResult",
    "TransportError",
    "UnsupportedLocale",
    "build_prompt",
    "escalated_temperature",
]

logger = logging.getLogger(__name__)

DEFAULT_PROMPT_TEMPLATE = (
    "Translate the following sentence from {src} to {tgt}. Keep every <x> "
    "tag exactly paired around the corresponding words and output only the "
    "translation.\n\n{text}"
)

# Retry-time decode variation: deterministic first, increasingly diverse.
DEFAULT_BASE_TEMPERATURE = 0.0
DEFAULT_TEMPERATURE_STEP = 0.3
TEMPERATURE_CAP = 1.0

DEFAULT_CREDENTIAL_ENV = "SLOTPROJ_API_KEY"


class TransportError(SlotprojError):
    """Network-level failure; retryable at the transport layer."""


class RateLimited(SlotprojError):
    """The endpoint asked us to back off."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class UnsupportedLocale(SlotprojError):
    """The backend does not translate this locale pair."""


class MalformedResponse(SlotprojError):
    """The endpoint answered with a body we cannot interpret."""


class MissingPlaceholder(SlotprojError):
    """A prompt template lacks a required placeholder."""


@dataclass(frozen=True)
class TranslationRequest:
    """One translation attempt for one tagged sentence."""

    tagged_text: str
    source_locale: str
    target_locale: str
    attempt: int = 1
    temperature: float = 0.0
    max_tokens: int = 256
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.attempt < 1:
            raise ValueError(f"attempt must be >= 1, got {self.attempt}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")


@dataclass(frozen=True)
class TranslationResult:
    """A backend's candidate translation plus audit material."""

    text: str
    raw: str = ""
    latency_ms: int = 0


def escalated_temperature(
    attempt: int,
    base: float = DEFAULT_BASE_TEMPERATURE,
    step: float = DEFAULT_TEMPERATURE_STEP,
    cap: float = TEMPERATURE_CAP,
) -> float:
    """Sampling temperature for the n-th feedback-loop attempt."""
    return min(base + (attempt - 1) * step, cap)


def build_prompt(template: str, request: TranslationRequest) -> str:
    """Substitute {src}, {tgt} and {text} into a prompt template.

    Pure substitution: the tagged text is never mutated.
    """
    for placeholder in ("{src}", "{tgt}", "{text}"):
        if placeholder not in template:
            raise MissingPlaceholder(f"prompt template lacks {placeholder}")
    try:
        return template.format(
            src=request.source_locale,
            tgt=request.target_locale,
            text=request.tagged_text,
        )
    except (KeyError, IndexError) as exc:
        raise MissingPlaceholder(f"prompt template has an unknown placeholder: {exc}") from exc


class TranslationBackend:
    """Backend interface: translate one request, safely callable from
    multiple workers at once."""

    name = "backend"
    max_concurrent = 1

    def translate(self, request: TranslationRequest) -> TranslationResult:
        raise NotImplementedError


def _call_rng(seed: int, request: TranslationRequest) -> random.Random:
    """Per-call RNG derived from (seed, attempt, text) only.

    Hash-based so that outputs are stable across runs, platforms and call
    order; mock determinism under concurrency depends on this.
    """
    key = f"{seed}|{request.attempt}|{request.tagged_text}".encode("utf-8")
    return random.Random(int.from_bytes(hashlib.sha256(key).digest()[:8], "big"))


def _split_units(text: str) -> list[str]:
    """Split a tagged sentence into reorderable units.

    A marker pair and everything between stays one unit; each plain word is
    its own unit. Assumes well-formed encoder output (space-separated
    markers, each name appearing exactly twice).
    """
    units: list[str] = []
    pending: list[str] = []
    open_name: str | None = None
    for word in text.split():
        match = MARKER_PATTERN.fullmatch(word)
        if open_name is None:
            if match:
                open_name = match.group(1)
                pending = [word]
            else:
                units.append(word)
        else:
            pending.append(word)
            if match and match.group(1) == open_name:
                units.append(" ".join(pending))
                open_name = None
                pending = []
    if pending:
        units.append(" ".join(pending))
    return units


class IdentityBackend(TranslationBackend):
    """Returns the tagged text unchanged."""

    name = "identity"

    def translate(self, request: TranslationRequest) -> TranslationResult:
        return TranslationResult(text=request.tagged_text, raw=request.tagged_text)


class ScrambleBackend(TranslationBackend):
    """Reorders words while keeping every tagged span contiguous.

    Simulates a translation that permutes constituents: units (plain words
    and whole tagged spans) are shuffled by the per-call RNG; an identity
    permutation falls back to reversal so the output is always reordered.
    Two-unit sentences therefore always come out reversed.
    """

    name = "scramble"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def translate(self, request: TranslationRequest) -> TranslationResult:
        units = _split_units(request.tagged_text)
        shuffled = list(units)
        _call_rng(self.seed, request).shuffle(shuffled)
        if shuffled == units and len(units) > 1:
            shuffled = units[::-1]
        text = " ".join(shuffled)
        return TranslationResult(text=text, raw=text)


class FaultyBackend(TranslationBackend):
    """Corrupts markers with probability p per call.

    The default corruption drops the final marker occurrence; with
    probability ``duplicate_prob`` the corruption instead duplicates a
    marker picked by the per-call RNG. Exercises every validation failure
    path without a real translator.
    """

    name = "faulty"

    def __init__(self, p: float = 1.0, seed: int = 0, duplicate_prob: float = 0.0):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {p}")
        self.p = p
        self.seed = seed
        self.duplicate_prob = duplicate_prob

    def translate(self, request: TranslationRequest) -> TranslationResult:
        text = request.tagged_text
        rng = _call_rng(self.seed, request)
        if rng.random() < self.p:
            markers = list(MARKER_PATTERN.finditer(text))
            if markers:
                if rng.random() < self.duplicate_prob:
                    victim = markers[rng.randrange(len(markers))]
                    text = text[: victim.end()] + " " + victim.group(0) + text[victim.end() :]
                else:
                    victim = markers[-1]
                    text = (text[: victim.start()] + text[victim.end() :]).strip()
                    text = " ".join(text.split())
        return TranslationResult(text=text, raw=text)


class ScriptedBackend(TranslationBackend):
    """Delegates to a different backend per attempt number.

    ``steps[n-1]`` answers attempt n; attempts past the script fall through
    to ``default`` (the last step when no default is given). Lets tests pin
    exact feedback-loop schedules, e.g. fail twice then succeed.
    """

    name = "scripted"

    def __init__(
        self,
        steps: list[TranslationBackend],
        default: TranslationBackend | None = None,
    ):
        if not steps and default is None:
            raise ValueError("ScriptedBackend needs at least one step or a default")
        self.steps = list(steps)
        self.default = default if default is not None else self.steps[-1]

    def translate(self, request: TranslationRequest) -> TranslationResult:
        if request.attempt <= len(self.steps):
            return self.steps[request.attempt - 1].translate(request)
        return self.default.translate(request)


class ThrottledBackend(TranslationBackend):
    """Wraps a backend with a fixed per-call delay (testing aid)."""

    name = "throttled"

    def __init__(self, inner: TranslationBackend, delay_ms: int):
        self.inner = inner
        self.delay_ms = delay_ms
        self.max_concurrent = getattr(inner, "max_concurrent", 1)

    def translate(self, request: TranslationRequest) -> TranslationResult:
        time.sleep(self.delay_ms / 1000.0)
        return self.inner.translate(request)


@dataclass
class BackendConfig:
    """Connection settings for the HTTP backend.

    The credential is read from the environment variable named by
    ``credential_env`` and never from config files; when the variable is
    unset the request is sent without an Authorization header (local
    inference servers usually need none).
    """

    endpoint: str
    model: str
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    dialect: str = "completions"  # or "chat"
    timeout: float = 60.0
    max_concurrent: int = 1
    credential_env: str = DEFAULT_CREDENTIAL_ENV
    transport_retries: int = 3
    backoff_base: float = 0.5
    supported_locales: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.max_concurrent < 1:
            raise ValueError(f"max_concurrent must be >= 1, got {self.max_concurrent}")
        if self.dialect not in ("completions", "chat"):
            raise ValueError(f"unknown endpoint dialect {self.dialect!r}")


class HttpBackend(TranslationBackend):
    """Posts prompts to a completions-style LLM inference endpoint.

    Transport-level retries (connection failures, 5xx, 429 backoff) happen
    inside this class and are invisible to the feedback loop: they never
    consume projection attempts.
    """

    name = "http"

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self.max_concurrent = config.max_concurrent
        self._session = session or requests.Session()

    def _payload(self, prompt: str, request: TranslationRequest) -> dict:
        payload: dict = {
            "model": self.config.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        if self.config.dialect == "chat":
            payload["messages"] = [{"role": "user", "content": prompt}]
        else:
            payload["prompt"] = prompt
        return payload

    def _extract_text(self, body: object) -> str:
        try:
            choice = body["choices"][0]  # type: ignore[index]
            if self.config.dialect == "chat":
                text = choice["message"]["content"]
            else:
                text = choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"no text candidate in response: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse(f"candidate text is {type(text).__name__}, not str")
        return text

    def translate(self, request: TranslationRequest) -> TranslationResult:
        cfg = self.config
        if cfg.supported_locales is not None and (
            request.target_locale not in cfg.supported_locales
        ):
            raise UnsupportedLocale(
                f"backend {cfg.model!r} does not serve locale {request.target_locale!r}"
            )
        prompt = build_prompt(cfg.prompt_template, request)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.credential_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = self._payload(prompt, request)

        last_error: Exception | None = None
        started = time.monotonic()
        for transport_attempt in range(cfg.transport_retries + 1):
            if transport_attempt:
                delay = cfg.backoff_base * (2 ** (transport_attempt - 1))
                if isinstance(last_error, RateLimited) and last_error.retry_after is not None:
                    delay = last_error.retry_after
                logger.debug("transport retry %d after %.2fs", transport_attempt, delay)
                time.sleep(delay)
            try:
                response = self._session.post(
                    cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"POST {cfg.endpoint} failed: {exc}")
                continue
            if response.status_code == 429:
                retry_after = response.headers.get("Retry-After")
                try:
                    wait = float(retry_after) if retry_after else cfg.backoff_base
                except ValueError:
                    wait = cfg.backoff_base
                last_error = RateLimited(f"429 from {cfg.endpoint}", wait)
                continue
            if response.status_code >= 500:
                last_error = TransportError(f"HTTP {response.status_code} from {cfg.endpoint}")
                continue
            if response.status_code >= 400:
                raise TransportError(
                    f"HTTP {response.status_code} from {cfg.endpoint}: {response.text[:200]}"
                )
            try:
                body = response.json()
            except ValueError as exc:
                raise MalformedResponse(f"response is not JSON: {exc}") from exc
            text = self._extract_text(body).strip()
            if text.startswith(prompt):  # completion endpoints commonly echo
                text = text[len(prompt) :].lstrip()
            latency_ms = int((time.monotonic() - started) * 1000)
            return TranslationResult(text=text, raw=response.text, latency_ms=latency_ms)
        assert last_error is not None
        raise last_error
