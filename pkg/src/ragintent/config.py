"""Configuration documents and their merge with command-line overrides.

Precedence, lowest to highest: built-in defaults, the config file (YAML or
JSON), then explicit command-line flags.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .pipeline import PipelineConfig


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    max_concurrency: int = 8
    request_timeout: float = 10.0
    auth_token_env: str | None = None
    write_ahead_log: str | None = None  # exemplar line file appended on each upsert
    snapshot_path: str | None = None

    def __post_init__(self):
        if self.request_timeout <= 0:
            raise ConfigError("request_timeout must be > 0")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if not 0 <= self.port < 65536:
            raise ConfigError("port out of range")


@dataclass(frozen=True)
class AppConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    index: str | None = None
    corpus: str | None = None
    catalog: str | None = None
    table: str | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pipeline"] = self.pipeline.to_dict()
        return d


def _check_keys(doc: dict, cls, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping")
    extra = set(doc) - {f.name for f in fields(cls)}
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")


def config_from_dict(doc: dict) -> AppConfig:
    _check_keys(doc, AppConfig, "config")
    doc = dict(doc)
    try:
        if "pipeline" in doc:
            doc["pipeline"] = PipelineConfig.from_dict(doc["pipeline"] or {})
        if "service" in doc:
            _check_keys(doc["service"] or {}, ServiceConfig, "service")
            doc["service"] = ServiceConfig(**(doc["service"] or {}))
        return AppConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> AppConfig:
    """Read a YAML or JSON config file; ``None`` gives the defaults."""
    if path is None:
        return AppConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        doc = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    return config_from_dict(doc or {})


def apply_overrides(cfg: AppConfig, **flags) -> AppConfig:
    """Overlay flags that were actually given (not ``None``) onto ``cfg``.

    Recognized keys: index, corpus, catalog, table, seed, top_k, retriever,
    vertical, hierarchical, provider, endpoint, model, dim, host, port.
    """
    flags = {k: v for k, v in flags.items() if v is not None}
    pipe = cfg.pipeline
    p_changes = {k: flags.pop(k) for k in ("top_k", "retriever", "vertical", "hierarchical") if k in flags}
    logits = pipe.logits
    l_changes = {}
    if "provider" in flags:
        l_changes["kind"] = flags.pop("provider")
    for k in ("endpoint", "model"):
        if k in flags:
            l_changes[k] = flags.pop(k)
    if "table" in flags:
        l_changes["table"] = flags["table"]
    if l_changes:
        logits = replace(logits, **l_changes)
    emb = pipe.embedding
    e_changes = {}
    if "dim" in flags:
        e_changes["dim"] = flags.pop("dim")
    if "seed" in flags:
        e_changes["seed"] = flags["seed"]
    if e_changes:
        emb = replace(emb, **e_changes)
    svc = cfg.service
    s_changes = {k: flags.pop(k) for k in ("host", "port") if k in flags}
    if s_changes:
        svc = replace(svc, **s_changes)
    top = {k: flags.pop(k) for k in ("index", "corpus", "catalog", "table", "seed") if k in flags}
    if flags:
        raise ConfigError(f"unknown override(s) {sorted(flags)}")
    pipe = replace(pipe, logits=logits, embedding=emb, **p_changes)
    return replace(cfg, pipeline=pipe, service=svc, **top)

