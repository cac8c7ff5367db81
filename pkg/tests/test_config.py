from __future__ import annotations

import json

import pytest

from ragintent.config import AppConfig, ServiceConfig, apply_overrides, config_from_dict, load_config
from ragintent.errors import ConfigError


def test_defaults():
    cfg = load_config(None)
    assert cfg == AppConfig()
    assert cfg.pipeline.top_k == 10 and cfg.service.port == 8080


def test_yaml_and_json_files(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("pipeline:\n  top_k: 4\n  retriever: bm25\nservice:\n  port: 9000\nindex: idx.bin\n")
    cfg = load_config(y)
    assert (cfg.pipeline.top_k, cfg.pipeline.retriever, cfg.service.port, cfg.index) == (4, "bm25", 9000, "idx.bin")
    j = tmp_path / "c.json"
    j.write_text(json.dumps(cfg.to_dict()))
    assert load_config(j) == cfg


def test_flags_override_file(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("pipeline:\n  top_k: 4\n  embedding:\n    dim: 64\n")
    cfg = apply_overrides(load_config(y), top_k=7, retriever=None, seed=3, provider="mock", port=1234)
    assert cfg.pipeline.top_k == 7
    assert cfg.pipeline.retriever == "dense"  # None means "not given"
    assert cfg.pipeline.embedding.dim == 64
    assert cfg.pipeline.embedding.seed == 3 and cfg.seed == 3
    assert cfg.service.port == 1234


def test_table_override_sets_provider_table():
    cfg = apply_overrides(AppConfig(), table="t.json")
    assert cfg.table == "t.json" and cfg.pipeline.logits.table == "t.json"


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"service": {"bogus": 1}},
    {"pipeline": {"bogus": 1}},
    {"pipeline": {"top_k": 0}},
    {"service": {"port": 70000}},
    {"service": {"request_timeout": 0}},
])
def test_rejects_bad_documents(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_unreadable_or_unparsable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_unknown_override():
    with pytest.raises(ConfigError):
        apply_overrides(AppConfig(), colour="red")


def test_service_config_validation():
    with pytest.raises(ConfigError):
        ServiceConfig(max_concurrency=0)
