"""Multimodal completion gateway.

Providers turn a :class:`CompletionRequest` into text. The :class:`Gateway`
in front of them adds a content-addressed response cache, bounded retries with
exponential backoff, an in-flight limit, and a JSON helper that allows one
repair prompt before giving up.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import re
import struct
import tempfile
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Union

import numpy as np
from PIL import Image

from .errors import (
    ProviderAuthError,
    ProviderProtocolError,
    ProviderUnavailable,
    ResponseFormatError,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "VISCA_API_KEY"


@dataclass(frozen=True)
class TextPart:
    text: str

    def digest_bytes(self) -> bytes:
        return self.text.encode("utf-8")


@dataclass(frozen=True)
class ImagePart:
    png: bytes

    @classmethod
    def from_array(cls, array: np.ndarray) -> ImagePart:
        buf = io.BytesIO()
        img = np.ascontiguousarray(array, dtype=np.uint8)
        if img.size == 0:
            img = np.zeros((1, 1, 3), dtype=np.uint8)
        Image.fromarray(img).save(buf, format="PNG", compress_level=6)
        return cls(buf.getvalue())

    def digest_bytes(self) -> bytes:
        return self.png

    def data_url(self) -> str:
        return "data:image/png;base64," + base64.b64encode(self.png).decode("ascii")


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    parts: tuple[Part, ...]
    temperature: float = 0.0
    max_output: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("a completion request needs at least one part")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    def extended(self, *parts: Part) -> CompletionRequest:
        return CompletionRequest(self.model, self.parts + tuple(parts), self.temperature, self.max_output)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    provider: str
    cached: bool = False
    usage: dict[str, int] | None = None


def cache_key(request: CompletionRequest) -> str:
    """SHA-256 over model, temperature and every part (type, length, bytes) in order."""
    h = hashlib.sha256()
    h.update(b"model\0" + request.model.encode("utf-8") + b"\0")
    h.update(b"temperature\0" + repr(float(request.temperature)).encode("ascii") + b"\0")
    for part in request.parts:
        data = part.digest_bytes()
        tag = b"T" if isinstance(part, TextPart) else b"I"
        h.update(tag + struct.pack(">Q", len(data)) + data)
    return h.hexdigest()


class ResponseCache:
    """One JSON file per key. Write-once: the first writer of a key wins."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        try:
            return json.loads(self.path(key).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            log.warning("ignoring corrupt cache entry %s", key)
            return None

    def put(self, key: str, entry: dict) -> dict:
        """Store ``entry`` unless the key exists; returns whatever is stored."""
        final = self.path(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{key}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False, sort_keys=True)
            try:
                os.link(tmp, final)
            except FileExistsError:
                pass
        finally:
            os.unlink(tmp)
        stored = self.get(key)
        return stored if stored is not None else entry


class TransientError(Exception):
    """A failure worth retrying (5xx, 429, connection trouble)."""


class Provider(Protocol):
    name: str

    def send(self, request: CompletionRequest) -> tuple[str, dict[str, int] | None]: ...


class HTTPProvider:
    """OpenAI-compatible ``/chat/completions`` endpoint with base64 image parts."""

    name = "http"

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        if not self.endpoint.endswith("/chat/completions"):
            self.endpoint += "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout

    def payload(self, request: CompletionRequest) -> dict[str, Any]:
        content = []
        for part in request.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                content.append({"type": "image_url", "image_url": {"url": part.data_url()}})
        return {
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
            "messages": [{"role": "user", "content": content}],
        }

    def send(self, request: CompletionRequest) -> tuple[str, dict[str, int] | None]:
        body = json.dumps(self.payload(request)).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise ProviderAuthError(f"HTTP {exc.code} from {self.endpoint}") from exc
            if exc.code in (408, 429) or exc.code >= 500:
                raise TransientError(f"HTTP {exc.code}") from exc
            raise ProviderProtocolError(f"HTTP {exc.code} from {self.endpoint}") from exc
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise TransientError(str(exc)) from exc
        try:
            data = json.loads(raw)
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderProtocolError(f"malformed completion payload: {raw[:200]!r}") from exc
        if isinstance(text, list):
            text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
        if not isinstance(text, str) or not text.strip():
            raise ProviderProtocolError("provider returned an empty completion")
        usage = data.get("usage")
        if isinstance(usage, dict):
            usage = {k: int(v) for k, v in usage.items() if isinstance(v, (int, float))}
        else:
            usage = None
        return text, usage


@dataclass
class GatewayStats:
    requests: int = 0
    cache_hits: int = 0
    provider_calls: int = 0
    retries: int = 0
    repairs: int = 0

    def to_dict(self) -> dict[str, int]:
        return dict(vars(self))


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json(text: str) -> Any:
    """Parse a JSON value from model output, tolerating code fences and chatter."""
    candidates = [text.strip()]
    candidates += [m.strip() for m in _FENCE.findall(text)]
    for opener, closer in ("{}", "[]"):
        start, end = text.find(opener), text.rfind(closer)
        if 0 <= start < end:
            candidates.append(text[start : end + 1])
    for cand in candidates:
        try:
            return json.loads(cand)
        except json.JSONDecodeError:
            continue
    raise ValueError("no JSON value found in model output")


class Gateway:
    def __init__(
        self,
        provider: Provider,
        cache: ResponseCache | None = None,
        model: str = "mock",
        temperature: float = 0.0,
        max_retries: int = 2,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.provider = provider
        self.cache = cache
        self.model = model
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self.stats = GatewayStats()
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._sleep = sleep

    def _count(self, name: str) -> None:
        with self._lock:
            setattr(self.stats, name, getattr(self.stats, name) + 1)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self._count("requests")
        key = cache_key(request) if self.cache is not None else None
        if key is not None:
            hit = self.cache.get(key)
            if hit is not None:
                self._count("cache_hits")
                return CompletionResponse(hit["text"], hit["provider"], True, hit.get("usage"))
        attempt = 0
        while True:
            try:
                with self._slots:
                    self._count("provider_calls")
                    text, usage = self.provider.send(request)
                break
            except TransientError as exc:
                if attempt >= self.max_retries:
                    raise ProviderUnavailable(
                        f"{self.provider.name}: gave up after {attempt + 1} attempts ({exc})"
                    ) from exc
                self._count("retries")
                self._sleep(self.backoff * (2**attempt))
                attempt += 1
        if not text:
            raise ProviderProtocolError(f"{self.provider.name} returned empty text")
        if key is not None:
            stored = self.cache.put(key, {"text": text, "provider": self.provider.name, "usage": usage})
            text = stored["text"]
        return CompletionResponse(text, self.provider.name, False, usage)

    def complete_json(
        self,
        request: CompletionRequest,
        validate: Callable[[Any], Any] | None = None,
    ) -> Any:
        """Complete and parse JSON; on failure send one repair prompt, then raise."""
        response = self.complete(request)
        try:
            value = extract_json(response.text)
            return validate(value) if validate else value
        except (ValueError, TypeError, KeyError) as first:
            self._count("repairs")
            repair = request.extended(
                TextPart(
                    "Your previous reply could not be used "
                    f"({first}). Previous reply:\n<<<\n{response.text}\n>>>\n"
                    "Answer again with only the JSON object described above."
                )
            )
            second = self.complete(repair)
            try:
                value = extract_json(second.text)
                return validate(value) if validate else value
            except (ValueError, TypeError, KeyError) as exc:
                raise ResponseFormatError(f"unusable model output after repair: {exc}", second.text) from exc


@dataclass
class ScriptedProvider:
    """Replays canned answers; handy for wiring tests and dry runs."""

    answers: list[str | Exception] = field(default_factory=list)
    name: str = "scripted"
    calls: list[CompletionRequest] = field(default_factory=list)

    def send(self, request: CompletionRequest) -> tuple[str, dict[str, int] | None]:
        self.calls.append(request)
        answer = self.answers.pop(0)
        if isinstance(answer, Exception):
            raise answer
        return answer, None
