"""Single choke-point for all model calls.

Three providers share one interface: `live` speaks an HTTP chat-completion
wire format, `replay` answers from content-addressed fixture files, and
`scripted` pops queued responses per template. Responses from the live and
scripted providers can be recorded into a cache directory whose files are
byte-compatible with replay fixtures, so any run can be replayed.

Fingerprints hash the UTF-8 concatenation of template_id, rendered prompt,
the image content digests in order, model class, temperature, and max_tokens,
joined by 0x1F separators.
"""

from __future__ import annotations

import base64
import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import (
    EmptyScript, GatewayError, MissingFixture, ProviderError,
    UnboundPlaceholder, UnknownTemplate,
)
from .images import ChartImage, content_digest, to_png_bytes

MODEL_CLASSES = ("vision", "text")
TEMPLATE_IDS = (
    "chart2table", "chart2vision", "chart2code", "visual_critique",
    "numeric_summary", "numeric_discrepancy", "decompose", "edit_agent",
)

API_KEY_ENV = "CHARTSMITH_API_KEY"
API_BASE_ENV = "CHARTSMITH_API_BASE"

_PLACEHOLDER = re.compile(r"\{\{([A-Za-z0-9_]+)\}\}")
_SEP = "\x1f"


@dataclass(frozen=True)
class ModelRequest:
    template_id: str
    variables: tuple[tuple[str, str], ...]
    images: tuple[ChartImage, ...] = ()
    model_class: str = "text"
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self):
        if self.model_class not in MODEL_CLASSES:
            raise ValueError(f"unknown model class {self.model_class!r}")
        if self.model_class == "vision" and not self.images:
            raise ValueError("vision requests must carry at least one image")

    @classmethod
    def make(cls, template_id: str, variables: dict[str, str] | None = None,
             images: tuple[ChartImage, ...] | list[ChartImage] = (),
             model_class: str | None = None, **kwargs) -> "ModelRequest":
        images = tuple(images)
        if model_class is None:
            model_class = "vision" if images else "text"
        pairs = tuple(sorted((str(k), str(v)) for k, v in (variables or {}).items()))
        return cls(template_id, pairs, images, model_class, **kwargs)

    @property
    def variables_dict(self) -> dict[str, str]:
        return dict(self.variables)


@dataclass(frozen=True)
class ModelResponse:
    text: str
    provider: str  # live | replay | scripted
    latency_ms: int
    fingerprint: str


def render_template(template_text: str, variables: dict[str, str]) -> str:
    """Single-pass `{{name}}` substitution; bindings are inserted verbatim."""
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in variables:
            raise UnboundPlaceholder(name)
        return variables[name]
    return _PLACEHOLDER.sub(sub, template_text)


class TemplateRegistry:
    """Prompt templates as versioned files; template_id = filename stem."""

    def __init__(self, extra_dirs: list[Path] | None = None):
        self._extra_dirs = [Path(d) for d in (extra_dirs or [])]
        self._cache: dict[str, str] = {}

    def load(self, template_id: str) -> str:
        if template_id in self._cache:
            return self._cache[template_id]
        for d in self._extra_dirs:
            path = d / f"{template_id}.txt"
            if path.is_file():
                text = path.read_text("utf-8")
                self._cache[template_id] = text
                return text
        ref = resources.files("chartsmith").joinpath(f"templates/{template_id}.txt")
        if ref.is_file():
            text = ref.read_text(encoding="utf-8")
            self._cache[template_id] = text
            return text
        raise UnknownTemplate(template_id)

    def render(self, template_id: str, variables: dict[str, str]) -> str:
        return render_template(self.load(template_id), variables)


def render_prompt(template_id: str, variables: dict[str, str],
                  registry: TemplateRegistry | None = None) -> str:
    return (registry or TemplateRegistry()).render(template_id, variables)


def fingerprint(req: ModelRequest, registry: TemplateRegistry | None = None) -> str:
    """64-hex digest identifying a request; stable across platforms."""
    prompt = render_prompt(req.template_id, req.variables_dict, registry)
    parts = [
        req.template_id,
        prompt,
        "".join(content_digest(img) for img in req.images),
        req.model_class,
        str(float(req.temperature)),
        str(int(req.max_tokens)),
    ]
    return hashlib.sha256(_SEP.join(parts).encode("utf-8")).hexdigest()


class RateLimiter:
    """Token bucket; acquire() blocks until a token is available."""

    def __init__(self, rps: float, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        self.rps = float(rps)
        self.burst = max(1, int(burst))
        self._tokens = float(self.burst)
        self._last = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._last) * self.rps)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rps
            self._sleep(wait)


class ReplayProvider:
    """Answers from `<fixtures>/<fingerprint>.txt`; fully offline."""

    name = "replay"

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def complete(self, req: ModelRequest, prompt: str, fp: str) -> str:
        path = self.fixtures_dir / f"{fp}.txt"
        if not path.is_file():
            raise MissingFixture(fp)
        return path.read_text("utf-8")


class ScriptedProvider:
    """Pops queued responses per template_id, in order."""

    name = "scripted"

    def __init__(self, scripts: dict[str, list[str]] | None = None):
        self._queues: dict[str, list[str]] = {k: list(v) for k, v in (scripts or {}).items()}
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str]] = []  # (template_id, prompt) log

    def push(self, template_id: str, *responses: str) -> None:
        with self._lock:
            self._queues.setdefault(template_id, []).extend(responses)

    def complete(self, req: ModelRequest, prompt: str, fp: str) -> str:
        with self._lock:
            self.calls.append((req.template_id, prompt))
            queue = self._queues.get(req.template_id) or []
            if not queue:
                raise EmptyScript(req.template_id)
            return queue.pop(0)


class LiveProvider:
    """HTTP chat-completion client with bounded retries.

    Retries up to 3 attempts with exponential backoff (x2 from 500 ms) on
    transport errors and 5xx responses only.
    """

    name = "live"

    def __init__(self, api_base: str | None = None, api_key: str | None = None,
                 vision_model: str = "default-vision-model", text_model: str = "default-text-model",
                 timeout_s: float = 120.0, transport=None, sleep=time.sleep):
        self.api_base = (api_base or os.environ.get(API_BASE_ENV, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(API_KEY_ENV, "")
        self.vision_model = vision_model
        self.text_model = text_model
        self.timeout_s = timeout_s
        self._transport = transport  # callable(url, headers, payload) -> (status, body)
        self._sleep = sleep

    def _post(self, url: str, headers: dict, payload: dict) -> tuple[int, str]:
        if self._transport is not None:
            return self._transport(url, headers, payload)
        import requests
        resp = requests.post(url, headers=headers, json=payload, timeout=self.timeout_s)
        return resp.status_code, resp.text

    def complete(self, req: ModelRequest, prompt: str, fp: str) -> str:
        if not self.api_base:
            raise GatewayError(f"live provider needs {API_BASE_ENV}")
        content: list[dict] = [{"type": "text", "text": prompt}]
        for img in req.images:
            b64 = base64.b64encode(to_png_bytes(img)).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
        payload = {
            "model": self.vision_model if req.model_class == "vision" else self.text_model,
            "messages": [{"role": "user", "content": content}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.api_base}/chat/completions"
        delay = 0.5
        last: tuple[int, str] = (0, "no attempt made")
        for attempt in range(3):
            try:
                status, body = self._post(url, headers, payload)
            except Exception as e:  # transport failure: retry
                status, body = 0, str(e)
            if 200 <= status < 300:
                import json as _json
                try:
                    return _json.loads(body)["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as e:
                    raise ProviderError(status, f"malformed completion body: {e}") from e
            last = (status, body)
            if status != 0 and not 500 <= status < 600:
                break  # 4xx and other non-retryable statuses
            if attempt < 2:
                self._sleep(delay)
                delay *= 2
        raise ProviderError(*last)


class Gateway:
    """Routes requests through a provider with a write-once response cache.

    With a cache_dir set, every completion is stored under its fingerprint and
    served from disk on repeat calls; the files double as replay fixtures.
    """

    def __init__(self, provider, registry: TemplateRegistry | None = None,
                 cache_dir: str | Path | None = None,
                 rate_limiter: RateLimiter | None = None):
        self.provider = provider
        self.registry = registry or TemplateRegistry()
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.rate_limiter = rate_limiter
        self.call_log: list[tuple[str, str]] = []  # (template_id, fingerprint)

    def complete(self, req: ModelRequest) -> ModelResponse:
        prompt = self.registry.render(req.template_id, req.variables_dict)
        fp = fingerprint(req, self.registry)
        self.call_log.append((req.template_id, fp))
        started = time.monotonic()
        if self.cache_dir is not None:
            cached = self.cache_dir / f"{fp}.txt"
            if cached.is_file():
                return ModelResponse(cached.read_text("utf-8"), self.provider.name, 0, fp)
        if self.rate_limiter is not None and self.provider.name == "live":
            self.rate_limiter.acquire()
        text = self.provider.complete(req, prompt, fp)
        latency_ms = int((time.monotonic() - started) * 1000)
        if self.cache_dir is not None:
            self._cache_write_once(fp, text)
        return ModelResponse(text, self.provider.name, latency_ms, fp)

    def _cache_write_once(self, fp: str, text: str) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        final = self.cache_dir / f"{fp}.txt"
        if final.exists():
            return
        tmp = self.cache_dir / f".{fp}.{os.getpid()}.{threading.get_ident()}.tmp"
        tmp.write_text(text, "utf-8")
        try:
            os.link(tmp, final)  # atomic create; losing the race keeps the first write
        except FileExistsError:
            pass
        finally:
            tmp.unlink(missing_ok=True)
