"""Engine gateway: one invocation surface over all execution backends.

Backends are remote OpenAI-compatible model endpoints (chat / completion /
image), a sandboxed expression evaluator (`code-exec`) and a scripted mock
for deterministic offline runs.  Credentials come from an environment
variable named in the engine config and are never stored in project files.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import httpx

from .ir import EvalError, ExprSyntaxError, Value, eval_expr, parse_expr

DEFAULT_ENDPOINT = "https://api.openai.com/v1"
DEFAULT_TIMEOUT = 60.0


class EngineKind(str, Enum):
    CHAT = "chat"
    COMPLETION = "completion"
    IMAGE = "image"
    CODE_EXEC = "code-exec"
    MOCK = "mock"


class EngineError(Exception):
    """Engine invocation failure; `retryable` marks transient conditions."""

    def __init__(self, message: str, *, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class UnknownEngineError(KeyError):
    """Requested engine name is not in the registry."""


@dataclass(frozen=True)
class EngineParams:
    """Model sampling knobs. Ranges are validated at construction."""

    temperature: float = 1.0
    max_length: int = 512
    top_p: float = 1.0
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if not isinstance(self.max_length, int) or self.max_length < 1:
            raise ValueError(f"max_length {self.max_length} must be a positive integer")
        if not 0 <= self.top_p <= 1:
            raise ValueError(f"top_p {self.top_p} outside [0, 1]")
        if not -2 <= self.frequency_penalty <= 2:
            raise ValueError(f"frequency_penalty {self.frequency_penalty} outside [-2, 2]")
        if not -2 <= self.presence_penalty <= 2:
            raise ValueError(f"presence_penalty {self.presence_penalty} outside [-2, 2]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "temperature": self.temperature,
            "max_length": self.max_length,
            "top_p": self.top_p,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "EngineParams":
        defaults = EngineParams()
        return EngineParams(
            temperature=data.get("temperature", defaults.temperature),
            max_length=data.get("max_length", defaults.max_length),
            top_p=data.get("top_p", defaults.top_p),
            frequency_penalty=data.get("frequency_penalty", defaults.frequency_penalty),
            presence_penalty=data.get("presence_penalty", defaults.presence_penalty),
        )


@dataclass
class EngineConfig:
    """A named, parameterized execution backend."""

    name: str
    kind: EngineKind
    model_id: str = ""
    endpoint: str | None = None
    params: EngineParams = field(default_factory=EngineParams)
    mock_script_ref: str | None = None
    api_key_env: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def check(self) -> None:
        if self.kind in (EngineKind.CHAT, EngineKind.COMPLETION, EngineKind.IMAGE):
            if not self.model_id:
                raise ValueError(f"engine {self.name!r} of kind {self.kind.value} needs a model_id")
        if self.kind is EngineKind.MOCK and not self.mock_script_ref:
            raise ValueError(f"mock engine {self.name!r} needs a mock_script_ref")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "kind": self.kind.value,
            "model_id": self.model_id,
            "endpoint": self.endpoint,
            "params": self.params.to_dict(),
            "mock_script_ref": self.mock_script_ref,
            "api_key_env": self.api_key_env,
        }
        out.update(self.extra)
        return out

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "EngineConfig":
        known = {"name", "kind", "model_id", "endpoint", "params", "mock_script_ref", "api_key_env"}
        try:
            kind = EngineKind(data["kind"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad engine kind in {data.get('name', '?')!r}") from exc
        return EngineConfig(
            name=data["name"],
            kind=kind,
            model_id=data.get("model_id", ""),
            endpoint=data.get("endpoint"),
            params=EngineParams.from_dict(data.get("params", {})),
            mock_script_ref=data.get("mock_script_ref"),
            api_key_env=data.get("api_key_env"),
            extra={k: v for k, v in data.items() if k not in known},
        )

    def copy(self) -> "EngineConfig":
        return replace(self, params=self.params, extra=dict(self.extra))


@dataclass
class EngineResponse:
    """Engine output: a text value (or image-ref for image engines) plus raw payload."""

    value: Value
    raw: str | None = None


@dataclass
class MockScript:
    """Scripted engine: first rule whose matcher is a substring of the prompt wins."""

    rules: list[tuple[str, str]] = field(default_factory=list)
    default: str = ""
    call_log: list[str] = field(default_factory=list)

    def respond(self, prompt: str) -> str:
        self.call_log.append(prompt)
        for matcher, response in self.rules:
            if matcher in prompt:
                return response
        return self.default

    def to_dict(self) -> dict[str, Any]:
        return {
            "rules": [{"match": m, "response": r} for m, r in self.rules],
            "default": self.default,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "MockScript":
        return MockScript(
            rules=[(r["match"], r["response"]) for r in data.get("rules", [])],
            default=data.get("default", ""),
        )

    @staticmethod
    def load_file(path: str | Path) -> "MockScript":
        with open(path, encoding="utf-8") as handle:
            return MockScript.from_dict(json.load(handle))


class EngineGateway:
    """Dispatches prompts to engines; owns the HTTP client and mock scripts.

    Mock script references resolve, in order, against: scripts registered by
    name, JSON files relative to `script_root`, then the gateway-wide default
    script.  File-loaded scripts are cached so their call logs accumulate.
    """

    def __init__(
        self,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        script_root: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.timeout = timeout
        self.script_root = Path(script_root) if script_root else None
        self._scripts: dict[str, MockScript] = {}
        self._file_scripts: dict[str, MockScript] = {}
        self._default_script: MockScript | None = None
        self._transport = transport
        self._client: httpx.Client | None = None  # built on first remote call

    @property
    def client(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout, transport=self._transport)
        return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    # -- mock wiring --------------------------------------------------------

    def register_mock_script(self, name: str, script: MockScript) -> None:
        self._scripts[name] = script

    def set_default_mock_script(self, script: MockScript | None) -> None:
        self._default_script = script

    def resolve_mock_script(self, ref: str | None) -> MockScript:
        if ref and ref in self._scripts:
            return self._scripts[ref]
        if ref:
            path = Path(ref)
            if not path.is_absolute() and self.script_root is not None:
                path = self.script_root / path
            key = str(path)
            if key in self._file_scripts:
                return self._file_scripts[key]
            if path.is_file():
                script = MockScript.load_file(path)
                self._file_scripts[key] = script
                return script
        if self._default_script is not None:
            return self._default_script
        raise EngineError(f"mock script {ref!r} not found")

    # -- invocation ---------------------------------------------------------

    def invoke(
        self,
        config: EngineConfig,
        prompt: str,
        override: EngineParams | None = None,
    ) -> EngineResponse:
        """Execute `prompt` on `config`'s backend and return its response.

        Deterministic for mock and code-exec engines.  Remote failures raise
        :class:`EngineError`; timeouts and 5xx/429 statuses are retryable.
        """
        config.check()
        if not prompt:
            raise EngineError("prompt must be non-empty")
        params = override if override is not None else config.params

        if config.kind is EngineKind.MOCK:
            script = self.resolve_mock_script(config.mock_script_ref)
            return EngineResponse(value=Value.text(script.respond(prompt)))
        if config.kind is EngineKind.CODE_EXEC:
            return self._exec_expression(prompt)
        if config.kind is EngineKind.CHAT:
            return self._chat(config, params, prompt)
        if config.kind is EngineKind.COMPLETION:
            return self._completion(config, params, prompt)
        if config.kind is EngineKind.IMAGE:
            return self._image(config, prompt)
        raise EngineError(f"unknown engine kind {config.kind!r}")

    def _exec_expression(self, prompt: str) -> EngineResponse:
        try:
            result = eval_expr({}, parse_expr(prompt))
        except (ExprSyntaxError, EvalError) as exc:
            raise EngineError(f"code-exec failed: {exc}") from exc
        return EngineResponse(value=Value.text(result.as_text()))

    def _headers(self, config: EngineConfig) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, config: EngineConfig, path: str, body: dict[str, Any]) -> dict[str, Any]:
        url = (config.endpoint or DEFAULT_ENDPOINT).rstrip("/") + path
        try:
            response = self.client.post(url, json=body, headers=self._headers(config))
        except httpx.TimeoutException as exc:
            raise EngineError(f"engine {config.name!r} timed out after {self.timeout}s", retryable=True) from exc
        except httpx.HTTPError as exc:
            raise EngineError(f"engine {config.name!r} request failed: {exc}", retryable=True) from exc
        if response.status_code >= 400:
            raise EngineError(
                f"engine {config.name!r} returned HTTP {response.status_code}: "
                f"{_provider_message(response)}",
                retryable=response.status_code == 429 or response.status_code >= 500,
            )
        try:
            return response.json()
        except ValueError as exc:
            raise EngineError(f"engine {config.name!r} returned non-JSON payload") from exc

    def _chat(self, config: EngineConfig, params: EngineParams, prompt: str) -> EngineResponse:
        payload = self._post(
            config,
            "/chat/completions",
            {
                "model": config.model_id,
                "messages": [{"role": "user", "content": prompt}],
                **_sampling_body(params),
            },
        )
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EngineError(f"engine {config.name!r} returned malformed completion") from exc
        return EngineResponse(value=Value.text(text or ""), raw=json.dumps(payload))

    def _completion(self, config: EngineConfig, params: EngineParams, prompt: str) -> EngineResponse:
        payload = self._post(
            config,
            "/completions",
            {"model": config.model_id, "prompt": prompt, **_sampling_body(params)},
        )
        try:
            text = payload["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EngineError(f"engine {config.name!r} returned malformed completion") from exc
        return EngineResponse(value=Value.text(text or ""), raw=json.dumps(payload))

    def _image(self, config: EngineConfig, prompt: str) -> EngineResponse:
        # Image engines yield an opaque reference; bytes are never fetched.
        payload = self._post(
            config,
            "/images/generations",
            {"model": config.model_id, "prompt": prompt, "n": 1},
        )
        try:
            entry = payload["data"][0]
            ref = entry.get("url") or entry.get("b64_json")
        except (KeyError, IndexError, TypeError) as exc:
            raise EngineError(f"engine {config.name!r} returned malformed image payload") from exc
        if not ref:
            raise EngineError(f"engine {config.name!r} returned no image reference")
        return EngineResponse(value=Value.image_ref(ref), raw=json.dumps(payload))


def _sampling_body(params: EngineParams) -> dict[str, Any]:
    return {
        "temperature": params.temperature,
        "max_tokens": params.max_length,
        "top_p": params.top_p,
        "frequency_penalty": params.frequency_penalty,
        "presence_penalty": params.presence_penalty,
    }


def _provider_message(response: httpx.Response) -> str:
    try:
        payload = response.json()
        return payload["error"]["message"]
    except (ValueError, KeyError, TypeError):
        return response.text[:200]


class EngineRegistry:
    """Named engine store; optionally persisted as a JSON array file.

    Saving an existing name overwrites.  Writes are serialized; reads return
    copies so callers can edit without touching the registry.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._engines: dict[str, EngineConfig] = {}
        self._lock = threading.Lock()
        if self._path is not None and self._path.is_file():
            for config in engines_from_list(json.loads(self._path.read_text(encoding="utf-8"))):
                self._engines[config.name] = config

    def save(self, config: EngineConfig) -> None:
        config.check()
        with self._lock:
            self._engines[config.name] = config.copy()
            self._flush()

    def load(self, name: str) -> EngineConfig:
        if name not in self._engines:
            raise UnknownEngineError(name)
        return self._engines[name].copy()

    def list(self) -> list[EngineConfig]:
        return [c.copy() for c in self._engines.values()]

    def delete(self, name: str) -> None:
        with self._lock:
            if name not in self._engines:
                raise UnknownEngineError(name)
            del self._engines[name]
            self._flush()

    def replace_all(self, configs: list[EngineConfig]) -> None:
        for config in configs:
            config.check()
        with self._lock:
            self._engines = {c.name: c.copy() for c in configs}
            self._flush()

    def _flush(self) -> None:
        if self._path is None:
            return
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._path.write_text(
            json.dumps(engines_to_list(list(self._engines.values())), indent=2) + "\n",
            encoding="utf-8",
        )


def engines_to_list(configs: list[EngineConfig]) -> list[dict[str, Any]]:
    """Engine file form: JSON array of configs."""
    return [c.to_dict() for c in configs]


def engines_from_list(data: list[dict[str, Any]]) -> list[EngineConfig]:
    return [EngineConfig.from_dict(entry) for entry in data]
