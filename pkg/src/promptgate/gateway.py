"""Proxy service: detect, anonymize, forward, restore, audit.

The gateway exposes a chat-completion endpoint. Safe prompts are forwarded
byte-identically; unsafe prompts have their last user message anonymized
before forwarding, and upstream responses are restored from the per-request
entity map. Every request appends exactly one audit record that carries
counts and category codes but never entity text.
"""

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from urllib.parse import urlparse

import httpx

from .anonymizer import EntityMap, MapStore, anonymize, profiles_from_catalog, restore
from .detector import PatternDetector, Safety, Verdict
from .dlms_client import (
    DecodingParams,
    PromptTemplate,
    TemplateKind,
    build_rft_prompt,
    build_sft_prompt,
    parse_rft_output,
    parse_sft_output,
    query_model,
    verdict_from_answer,
)
from .errors import (
    ConfigError,
    DetectorUnavailable,
    KeyMaterialError,
    MalformedOutput,
    TransportError,
    UpstreamError,
)
from .fpe import Ff3Key
from .policy import PolicyCatalog, default_taxonomy, load_catalog

DEFAULT_KEY_ENV = "PROMPTGATE_KEY"
AUDIT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GatewayConfig:
    upstream_endpoint: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    upstream_api_key: str | None = None
    detector_mode: str = "builtin"  # builtin | remote
    dlms_endpoint: str | None = None
    dlms_template: TemplateKind = TemplateKind.SFT_GUARD
    dlms_api_key: str | None = None
    catalog_path: str | None = None
    key_source: dict = field(default_factory=lambda: {"env": DEFAULT_KEY_ENV})
    audit_log_path: str | None = None
    map_store_path: str | None = None
    upstream_timeout: float = 30.0
    detector_timeout: float = 15.0
    block_on_detector_failure: bool = True
    unsafe_action: str = "sanitize"  # sanitize | block

    def __post_init__(self):
        if self.upstream_timeout <= 0 or self.detector_timeout <= 0:
            raise ConfigError("timeouts must be positive")
        if self.detector_mode not in ("builtin", "remote"):
            raise ConfigError(f"unknown detector mode {self.detector_mode!r}")
        if self.detector_mode == "remote" and not self.dlms_endpoint:
            raise ConfigError("remote detector mode requires dlms_endpoint")
        if self.unsafe_action not in ("sanitize", "block"):
            raise ConfigError(f"unknown unsafe_action {self.unsafe_action!r}")
        upstream = urlparse(self.upstream_endpoint)
        if not upstream.scheme or not upstream.hostname:
            raise ConfigError(f"invalid upstream endpoint {self.upstream_endpoint!r}")
        local = {"localhost", "127.0.0.1", "::1"}
        same_host = upstream.hostname == self.listen_host or (
            upstream.hostname in local and self.listen_host in local
        )
        if same_host and (upstream.port or 80) == self.listen_port:
            raise ConfigError("upstream endpoint must differ from the listen address")


def load_config(path: str) -> GatewayConfig:
    """Read the gateway config file; raises ConfigError on any defect."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    try:
        listen = doc.get("listen", {})
        upstream = doc["upstream"]
        detector = doc.get("detector", {"mode": "builtin"})
        timeouts = doc.get("timeouts", {})
        template = detector.get("template", "sft")
        return GatewayConfig(
            listen_host=listen.get("host", "127.0.0.1"),
            listen_port=int(listen.get("port", 8080)),
            upstream_endpoint=upstream["endpoint"],
            upstream_api_key=_secret(upstream),
            detector_mode=detector.get("mode", "builtin"),
            dlms_endpoint=detector.get("endpoint"),
            dlms_template=TemplateKind(template),
            dlms_api_key=_secret(detector),
            catalog_path=doc.get("catalog"),
            key_source=doc.get("key", {"env": DEFAULT_KEY_ENV}),
            audit_log_path=doc.get("audit_log"),
            map_store_path=doc.get("map_store"),
            upstream_timeout=float(timeouts.get("upstream", 30.0)),
            detector_timeout=float(timeouts.get("detector", 15.0)),
            block_on_detector_failure=bool(doc.get("block_on_detector_failure", True)),
            unsafe_action=doc.get("unsafe_action", "sanitize"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config {path}: {exc!r}") from exc


def _secret(section: dict) -> str | None:
    import os

    env = section.get("api_key_env")
    if env:
        return os.environ.get(env)
    return section.get("api_key")


def resolve_key(source: dict) -> Ff3Key:
    """Key provisioning: hex in env var, hex key file, or inline hex."""
    if "env" in source:
        return Ff3Key.from_env(source["env"])
    if "file" in source:
        return Ff3Key.from_file(source["file"])
    if "hex" in source:
        return Ff3Key.from_hex(source["hex"], key_id="inline")
    raise KeyMaterialError(f"key source must name env, file, or hex, got {sorted(source)}")


def resolve_catalog(config: GatewayConfig) -> PolicyCatalog:
    if config.catalog_path:
        return load_catalog(config.catalog_path)
    return default_taxonomy()


@dataclass(frozen=True)
class AuditRecord:
    """One per request; never carries entity plaintext or ciphertext."""

    request_id: str
    timestamp: float
    safety: str | None
    category_codes: tuple[str, ...]
    entity_count: int
    fallback_count: int
    upstream_latency_ms: float | None
    outcome: str  # Forwarded | ForwardedSanitized | Blocked | Error

    def to_json(self) -> dict:
        return {
            "schema_version": AUDIT_SCHEMA_VERSION,
            "request_id": self.request_id,
            "timestamp": self.timestamp,
            "safety": self.safety,
            "category_codes": list(self.category_codes),
            "entity_count": self.entity_count,
            "fallback_count": self.fallback_count,
            "upstream_latency_ms": self.upstream_latency_ms,
            "outcome": self.outcome,
        }


class AuditLog:
    """Serialized JSONL appender; one writer at a time."""

    def __init__(self, path: str | None):
        self._path = path
        self._lock = threading.Lock()
        self.records: list[AuditRecord] = []

    def append(self, record: AuditRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_json()) + "\n")


@dataclass
class GatewayResult:
    status_code: int
    body: bytes
    outcome: str
    request_id: str
    media_type: str = "application/json"


class GatewayService:
    """The seven-step request flow around one upstream chat endpoint."""

    def __init__(
        self,
        config: GatewayConfig,
        catalog: PolicyCatalog | None = None,
        key: Ff3Key | None = None,
        upstream_transport: httpx.BaseTransport | None = None,
        detector_transport: httpx.BaseTransport | None = None,
    ):
        self.config = config
        self.catalog = catalog if catalog is not None else resolve_catalog(config)
        self.key = key if key is not None else resolve_key(config.key_source)
        self.audit = AuditLog(config.audit_log_path)
        self.profiles = profiles_from_catalog(self.catalog)
        self._detector = (
            PatternDetector(self.catalog) if config.detector_mode == "builtin" else None
        )
        self._upstream_transport = upstream_transport
        self._detector_transport = detector_transport
        self._map_store = (
            MapStore(config.map_store_path, self.key) if config.map_store_path else None
        )

    # -- detection -------------------------------------------------------------

    def _detect(self, message: str) -> Verdict:
        if self._detector is not None:
            return self._detector.detect(message)
        return self._detect_remote(message)

    def _detect_remote(self, message: str) -> Verdict:
        kind = self.config.dlms_template
        if kind is TemplateKind.SFT_GUARD:
            prompt = build_sft_prompt(message, self.catalog)
        else:
            prompt = build_rft_prompt(message, self.catalog, PromptTemplate(kind))
        params = DecodingParams(
            timeout=self.config.detector_timeout, api_key=self.config.dlms_api_key
        )
        try:
            raw = query_model(
                self.config.dlms_endpoint, prompt, params, self._detector_transport
            )
        except (TransportError, UpstreamError) as exc:
            raise DetectorUnavailable(str(exc)) from exc
        try:
            if kind is TemplateKind.SFT_GUARD:
                answer = parse_sft_output(raw, self.catalog)
            else:
                answer = parse_rft_output(raw, self.catalog).answer
        except MalformedOutput as exc:
            raise DetectorUnavailable(f"detector output unparseable: {exc}") from exc
        if answer is None or answer.safety is None:
            raise DetectorUnavailable("detector answer missing or unknown")
        return verdict_from_answer(message, answer, self.catalog)

    # -- upstream --------------------------------------------------------------

    def _forward(self, body: bytes) -> tuple[httpx.Response, float]:
        headers = {"content-type": "application/json"}
        if self.config.upstream_api_key:
            headers["authorization"] = f"Bearer {self.config.upstream_api_key}"
        started = time.perf_counter()
        try:
            with httpx.Client(
                transport=self._upstream_transport, timeout=self.config.upstream_timeout
            ) as client:
                response = client.post(
                    self.config.upstream_endpoint, content=body, headers=headers
                )
        except httpx.TimeoutException as exc:
            raise TransportError(f"upstream timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransportError(f"upstream unreachable: {exc}") from exc
        latency_ms = (time.perf_counter() - started) * 1000
        return response, latency_ms

    # -- request flow ------------------------------------------------------------

    def handle_chat(self, raw_body: bytes, request_id: str | None = None) -> GatewayResult:
        request_id = request_id or uuid.uuid4().hex
        verdict: Verdict | None = None
        latency: float | None = None
        entity_map: EntityMap | None = None

        def finish(status: int, body: bytes, outcome: str) -> GatewayResult:
            self.audit.append(
                AuditRecord(
                    request_id=request_id,
                    timestamp=time.time(),
                    safety=verdict.safety.value if verdict else None,
                    category_codes=tuple(sorted(verdict.categories)) if verdict else (),
                    entity_count=len(verdict.entities) if verdict else 0,
                    fallback_count=entity_map.fallback_count if entity_map else 0,
                    upstream_latency_ms=latency,
                    outcome=outcome,
                )
            )
            return GatewayResult(status, body, outcome, request_id)

        try:
            message, document = _last_user_message(raw_body)
        except ValueError as exc:
            return finish(400, _error_body("invalid_request", str(exc)), "Error")

        try:
            verdict = self._detect(message)
        except DetectorUnavailable as exc:
            if self.config.block_on_detector_failure:
                return finish(
                    503,
                    _error_body(
                        "detector_unavailable",
                        f"request blocked: detector failed ({exc})",
                    ),
                    "Blocked",
                )
            verdict = None
            forwarded, latency, error = self._try_forward(raw_body)
            if error is not None:
                return finish(*error, "Error")
            return finish(forwarded.status_code, forwarded.content, "Error")

        if verdict.safety is Safety.SAFE:
            forwarded, latency, error = self._try_forward(raw_body)
            if error is not None:
                return finish(*error, "Error")
            if forwarded.status_code >= 400:
                return finish(forwarded.status_code, forwarded.content, "Error")
            return finish(forwarded.status_code, forwarded.content, "Forwarded")

        if self.config.unsafe_action == "block":
            return finish(
                403,
                _error_body(
                    "policy_violation",
                    "request blocked by policy; violated categories: "
                    + ", ".join(sorted(verdict.categories)),
                ),
                "Blocked",
            )

        sanitized_message, entity_map = anonymize(
            message, verdict, self.key, self.profiles, request_id
        )
        document["messages"][-1]["content"] = sanitized_message
        sanitized_body = json.dumps(document, ensure_ascii=False).encode("utf-8")

        forwarded, latency, error = self._try_forward(sanitized_body)
        if error is not None:
            return finish(*error, "Error")
        if forwarded.status_code >= 400:
            return finish(forwarded.status_code, forwarded.content, "Error")

        restored = _restore_response(forwarded.content, entity_map)
        if self._map_store is not None:
            self._map_store.append(entity_map)
        return finish(forwarded.status_code, restored, "ForwardedSanitized")

    def _try_forward(self, body: bytes):
        try:
            response, latency = self._forward(body)
        except TransportError as exc:
            return None, None, (502, _error_body("upstream_unreachable", str(exc)))
        return response, latency, None

    # -- health --------------------------------------------------------------------

    def health(self) -> dict:
        reachable = True
        try:
            with httpx.Client(
                transport=self._upstream_transport, timeout=2.0
            ) as client:
                client.get(self.config.upstream_endpoint)
        except httpx.HTTPError:
            reachable = False
        return {
            "status": "ok" if reachable else "degraded",
            "catalog_version": self.catalog.version,
            "detector_mode": self.config.detector_mode,
            "upstream_reachable": reachable,
        }


def _last_user_message(raw_body: bytes) -> tuple[str, dict]:
    try:
        document = json.loads(raw_body)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ValueError(f"body is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ValueError("body must be a JSON object")
    messages = document.get("messages")
    if not isinstance(messages, list) or not messages:
        raise ValueError("body needs a non-empty messages array")
    last = messages[-1]
    if not isinstance(last, dict) or last.get("role") != "user":
        raise ValueError("last message must have role user")
    content = last.get("content")
    if not isinstance(content, str):
        raise ValueError("last user message content must be a string")
    return content, document


def _error_body(code: str, message: str) -> bytes:
    return json.dumps({"error": {"type": code, "message": message}}).encode("utf-8")


def _restore_response(body: bytes, entity_map: EntityMap) -> bytes:
    try:
        document = json.loads(body)
        choices = document["choices"]
        for choice in choices:
            content = choice["message"]["content"]
            if isinstance(content, str):
                choice["message"]["content"] = restore(content, entity_map)
        return json.dumps(document, ensure_ascii=False).encode("utf-8")
    except (ValueError, KeyError, TypeError):
        # not the expected shape: restore over the raw text instead
        try:
            return restore(body.decode("utf-8"), entity_map).encode("utf-8")
        except UnicodeDecodeError:
            return body


def create_app(service: GatewayService):
    """FastAPI app wrapping the service; import-light for library users."""
    from fastapi import FastAPI, Request, Response
    from starlette.concurrency import run_in_threadpool

    app = FastAPI(title="promptgate", docs_url=None, redoc_url=None)

    @app.post("/v1/chat/completions")
    async def chat_completions(request: Request) -> Response:
        raw = await request.body()
        # the service blocks on upstream I/O; keep the event loop free
        result = await run_in_threadpool(
            service.handle_chat, raw, request.headers.get("x-request-id")
        )
        return Response(
            content=result.body,
            status_code=result.status_code,
            media_type=result.media_type,
            headers={"x-request-id": result.request_id},
        )

    @app.get("/health")
    async def health() -> dict:
        return await run_in_threadpool(service.health)

    return app


def run_gateway(config: GatewayConfig) -> None:
    """Boot the gateway with uvicorn; fails fast on catalog/key errors."""
    import uvicorn

    service = GatewayService(config)
    app = create_app(service)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="info")


# re-export for callers that configure programmatically
__all__ = [
    "AuditLog",
    "AuditRecord",
    "GatewayConfig",
    "GatewayResult",
    "GatewayService",
    "create_app",
    "load_config",
    "resolve_catalog",
    "resolve_key",
    "run_gateway",
]
