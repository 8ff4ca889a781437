"""LLM provider access, regenerate-on-invalid retries, and token accounting.

Two providers are available: :class:`HttpProvider` speaks the OpenAI-style
``/v1/chat/completions`` protocol, and :class:`ReplayProvider` serves
responses recorded earlier, keyed by a digest of the prompt. Wrapping a live
provider in :class:`RecordingProvider` produces such a replay file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, TypeVar

import httpx

from .prompting import EDITOR, EVALUATOR, ROLE_TAGS, VERIFIER, ChatMessage, ParseError, PromptBundle

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_MAX_TOKENS = {EVALUATOR: 512, EDITOR: 512, VERIFIER: 8}
MAX_TEMPERATURE = 1.0

MODULE_NAMES = {
    EVALUATOR: "Error Analysis Evaluator",
    EDITOR: "Error-based APE",
    VERIFIER: "Pairwise Quality Verifier",
}


class ProviderError(RuntimeError):
    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class InvalidResponseError(RuntimeError):
    """Every attempt produced output the parser rejected."""

    def __init__(self, attempts: int, last_text: str):
        super().__init__(f"invalid response after {attempts} attempts")
        self.attempts = attempts
        self.last_text = last_text


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    role_tag: str
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request has no messages")
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role tag {self.role_tag!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def from_bundle(cls, bundle: PromptBundle, temperature: float = 0.0, max_tokens=None):
        if max_tokens is None:
            max_tokens = DEFAULT_MAX_TOKENS[bundle.role_tag]
        return cls(bundle.messages, bundle.role_tag, temperature, max_tokens)

    @property
    def digest(self) -> str:
        return prompt_digest(self.role_tag, self.messages)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    temperature_step: float = 0.1
    base_temperature: float = 0.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def temperature(self, attempt: int) -> float:
        """Temperature for the 1-based ``attempt``, capped at 1.0."""
        t = self.base_temperature + self.temperature_step * (attempt - 1)
        return round(min(t, MAX_TEMPERATURE), 6)


def prompt_digest(role_tag: str, messages: Sequence[ChatMessage]) -> str:
    payload = json.dumps(
        {"role_tag": role_tag, "messages": [m.to_dict() for m in messages]},
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class RoleUsage:
    requests: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class UsageLedger:
    """Thread-safe per-role token totals."""

    def __init__(self):
        self._lock = threading.Lock()
        self._usage = {role: RoleUsage() for role in ROLE_TAGS}

    def record(self, role_tag: str, result: CompletionResult) -> None:
        with self._lock:
            u = self._usage[role_tag]
            u.requests += 1
            u.prompt_tokens += result.prompt_tokens
            u.completion_tokens += result.completion_tokens

    def merge(self, other: UsageLedger) -> None:
        snapshot = other.snapshot()
        with self._lock:
            for role, u in snapshot.items():
                mine = self._usage[role]
                mine.requests += u.requests
                mine.prompt_tokens += u.prompt_tokens
                mine.completion_tokens += u.completion_tokens

    def snapshot(self) -> dict[str, RoleUsage]:
        with self._lock:
            return {role: dataclasses.replace(u) for role, u in self._usage.items()}

    def __getitem__(self, role_tag: str) -> RoleUsage:
        return self.snapshot()[role_tag]

    @property
    def total_tokens(self) -> int:
        return sum(u.prompt_tokens + u.completion_tokens for u in self.snapshot().values())

    def to_dict(self) -> dict:
        return {role: dataclasses.asdict(u) for role, u in self.snapshot().items()}

    @classmethod
    def from_dict(cls, d: dict) -> UsageLedger:
        ledger = cls()
        for role, u in d.items():
            ledger._usage[role] = RoleUsage(**u)
        return ledger

    def __eq__(self, other):
        return isinstance(other, UsageLedger) and self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class UsageRow:
    role_tag: str
    module: str
    extra: bool
    requests: int
    avg_input: float
    avg_generated: float


def usage_report(ledger: UsageLedger, n_segments: int) -> list[UsageRow]:
    """Average tokens per evaluated segment for each pipeline module."""
    if n_segments <= 0:
        raise ValueError("usage report needs at least one segment")
    rows = []
    for role, u in ledger.snapshot().items():
        rows.append(
            UsageRow(
                role_tag=role,
                module=MODULE_NAMES[role],
                extra=role != EVALUATOR,
                requests=u.requests,
                avg_input=u.prompt_tokens / n_segments,
                avg_generated=u.completion_tokens / n_segments,
            )
        )
    return rows


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResult: ...


class HttpProvider:
    """Client for an OpenAI-compatible chat-completions endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.url = base_url.rstrip("/") + "/v1/chat/completions"
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers

    def complete(self, request: CompletionRequest) -> CompletionResult:
        body = {
            "model": self.model,
            "messages": [m.to_dict() for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = self._client.post(self.url, json=body, headers=self._headers)
        except httpx.TransportError as exc:
            raise ProviderError(f"transport failure: {exc}", retryable=True) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(f"HTTP {resp.status_code} from {self.url}", retryable=True)
        if not 200 <= resp.status_code < 300:
            raise ProviderError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
            usage = data.get("usage") or {}
            return CompletionResult(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            )
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion body: {exc}") from exc

    def close(self):
        self._client.close()


def _temp_key(t: float | None) -> float | None:
    return None if t is None else round(float(t), 6)


class ReplayProvider:
    """Serve recorded responses by ``(role_tag, prompt digest, temperature)``.

    Entries recorded without a temperature match any temperature and are
    used only when no temperature-specific entry exists. Repeated lookups of
    one key walk through its entries in file order and then keep returning
    the last one, so duplicate prompts replay identically.
    """

    def __init__(self, entries: Sequence[dict]):
        self._entries: dict[tuple, list[dict]] = {}
        for e in entries:
            key = (e["role_tag"], e["digest"], _temp_key(e.get("temperature")))
            self._entries.setdefault(key, []).append(e)
        self._cursor: dict[tuple, int] = {}
        self._lock = threading.Lock()
        self.consumed: list[tuple[str, str, float]] = []

    @classmethod
    def from_file(cls, path) -> ReplayProvider:
        with open(path, encoding="utf-8") as f:
            return cls([json.loads(line) for line in f if line.strip()])

    def complete(self, request: CompletionRequest) -> CompletionResult:
        digest = request.digest
        with self._lock:
            key = (request.role_tag, digest, _temp_key(request.temperature))
            if key not in self._entries:
                key = (request.role_tag, digest, None)
            if key not in self._entries:
                raise ProviderError(
                    f"no replay entry for {request.role_tag} prompt {digest[:12]} "
                    f"at temperature {request.temperature}"
                )
            entries = self._entries[key]
            i = self._cursor.get(key, 0)
            self._cursor[key] = i + 1
            self.consumed.append((request.role_tag, digest, request.temperature))
        e = entries[min(i, len(entries) - 1)]
        return CompletionResult(e["text"], int(e["prompt_tokens"]), int(e["completion_tokens"]))


class RecordingProvider:
    """Pass requests through to ``inner`` and keep every exchange for replay."""

    def __init__(self, inner: Provider):
        self.inner = inner
        self._lock = threading.Lock()
        self._records: dict[tuple, dict] = {}

    def complete(self, request: CompletionRequest) -> CompletionResult:
        result = self.inner.complete(request)
        rec = {
            "role_tag": request.role_tag,
            "digest": request.digest,
            "temperature": _temp_key(request.temperature),
            "text": result.text,
            "prompt_tokens": result.prompt_tokens,
            "completion_tokens": result.completion_tokens,
        }
        key = (rec["role_tag"], rec["digest"], rec["temperature"])
        with self._lock:
            self._records.setdefault(key, rec)
        return result

    def records(self) -> list[dict]:
        with self._lock:
            return [self._records[k] for k in sorted(self._records)]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.records():
                f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


class Backend:
    """A provider plus retry policy, in-flight limit and usage ledger."""

    def __init__(
        self,
        provider: Provider,
        policy: RetryPolicy | None = None,
        max_in_flight: int = 8,
        max_tokens: dict[str, int] | None = None,
        transport_retries: int = 2,
        backoff: float = 1.0,
    ):
        self.provider = provider
        self.policy = policy or RetryPolicy()
        self.ledger = UsageLedger()
        self.max_tokens = {**DEFAULT_MAX_TOKENS, **(max_tokens or {})}
        self.transport_retries = transport_retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        delay = self.backoff
        for attempt in range(self.transport_retries + 1):
            try:
                with self._slots:
                    return self.provider.complete(request)
            except ProviderError as exc:
                if not exc.retryable or attempt == self.transport_retries:
                    raise
                logger.warning("retryable provider error (%s); sleeping %.1fs", exc, delay)
                time.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def complete_validated(
        self,
        request: CompletionRequest | PromptBundle,
        validator: Callable[[str], T],
        usage: UsageLedger | None = None,
    ) -> tuple[T, CompletionResult]:
        """Call the provider until ``validator`` accepts the text.

        Attempt ``k`` runs at the policy temperature for ``k``. Tokens of
        every attempt, rejected or not, go to the backend ledger and to
        ``usage`` when given.
        """
        if isinstance(request, PromptBundle):
            request = CompletionRequest.from_bundle(
                request, max_tokens=self.max_tokens[request.role_tag]
            )
        text = ""
        for attempt in range(1, self.policy.max_attempts + 1):
            req = dataclasses.replace(request, temperature=self.policy.temperature(attempt))
            result = self.complete(req)
            self.ledger.record(req.role_tag, result)
            if usage is not None:
                usage.record(req.role_tag, result)
            text = result.text
            try:
                return validator(text), result
            except ParseError as exc:
                logger.info(
                    "%s attempt %d rejected (%s) at temperature %.2f",
                    req.role_tag, attempt, exc, req.temperature,
                )
        raise InvalidResponseError(self.policy.max_attempts, text)
