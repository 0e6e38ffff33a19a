"""File/environment configuration for the CLI and service.

A config file (YAML or JSON) may set any reasoner/span/rewriter field plus
paths and serving options; ``RULEREADER_*`` environment variables override
the serve section (e.g. ``RULEREADER_PORT``, ``RULEREADER_HOST``,
``RULEREADER_MODEL_DIR``, ``RULEREADER_DATA``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from rulereader.reasoner import ReasonerConfig
from rulereader.rewriter import RewriterConfig
from rulereader.spanmodel import SpanConfig


@dataclass
class AppConfig:
    data_path: str | None = None
    data_format: str = "normalized-jsonl"
    model_dir: str = "models"
    index_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8000
    top_k: int = 20
    max_turns: int = 8
    rewriter_mode: str = "template"  # "template" or "seq2seq"
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig.desk)
    span: SpanConfig = field(default_factory=SpanConfig.desk)
    rewriter: RewriterConfig = field(default_factory=RewriterConfig)

    def resolved_index_path(self) -> Path:
        if self.index_path:
            return Path(self.index_path)
        return Path(self.model_dir) / "index.json.gz"


def load_config(path: str | Path | None = None) -> AppConfig:
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        raw = (
            json.loads(text)
            if str(path).endswith(".json")
            else yaml.safe_load(text) or {}
        )
    config = AppConfig()
    for key in ("data_path", "data_format", "model_dir", "index_path", "host",
                "port", "top_k", "max_turns", "rewriter_mode"):
        if key in raw:
            setattr(config, key, raw[key])
    for section, cls in (("reasoner", ReasonerConfig), ("span", SpanConfig),
                         ("rewriter", RewriterConfig)):
        if section in raw:
            base = getattr(config, section)
            merged = {**base.__dict__, **raw[section]}
            setattr(config, section, cls(**merged))

    env = os.environ
    if "RULEREADER_HOST" in env:
        config.host = env["RULEREADER_HOST"]
    if "RULEREADER_PORT" in env:
        config.port = int(env["RULEREADER_PORT"])
    if "RULEREADER_MODEL_DIR" in env:
        config.model_dir = env["RULEREADER_MODEL_DIR"]
    if "RULEREADER_DATA" in env:
        config.data_path = env["RULEREADER_DATA"]
    return config
