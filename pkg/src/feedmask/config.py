"""Settings resolution and engine wiring for the CLI.

Precedence: explicit CLI flag > FEEDMASK_* environment variable >
config-file entry > built-in default.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from feedmask.engine import Engine, LogicalClock, SystemClock
from feedmask.gateway import (
    Gateway,
    HashEmbedder,
    HttpBackend,
    HttpEmbedder,
    ScriptedStub,
)

ENV_PREFIX = "FEEDMASK_"

DEFAULTS = {
    "data_dir": "./feedmask-data",
    "gateway_url": None,
    "model": "local-model",
    "token": None,
    "scripts": None,
    "user_id": "local",
    "seed": 0,
    "clock": "system",
}

# config files use camelCase keys, matching the API payloads
_FILE_KEYS = {
    "dataDir": "data_dir",
    "gatewayUrl": "gateway_url",
    "model": "model",
    "token": "token",
    "scripts": "scripts",
    "userId": "user_id",
    "seed": "seed",
    "clock": "clock",
}


def default_scripts_dir() -> Path:
    return Path(__file__).parent / "gateway" / "scripts"


def load_config_file(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(doc) - set(_FILE_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return {_FILE_KEYS[key]: value for key, value in doc.items()}


def resolve_settings(cli: dict, config_path=None, env=None) -> dict:
    if env is None:
        env = os.environ
    file_cfg = load_config_file(config_path) if config_path else {}
    settings = {}
    for key, default in DEFAULTS.items():
        value = cli.get(key)
        if value is None:
            value = env.get(ENV_PREFIX + key.upper())
        if value is None:
            value = file_cfg.get(key)
        if value is None:
            value = default
        settings[key] = value
    settings["seed"] = int(settings["seed"])
    if settings["clock"] not in ("system", "logical"):
        raise ValueError(f"clock must be system or logical, got {settings['clock']!r}")
    return settings


def build_gateway(settings: dict) -> Gateway:
    url = settings.get("gateway_url")
    if url:
        backend = HttpBackend(url, settings["model"], settings.get("token"))
        embedder = HttpEmbedder(url, settings["model"], settings.get("token"))
        return Gateway(backend, embedder)
    scripts = settings.get("scripts") or default_scripts_dir()
    return Gateway(ScriptedStub.from_dir(scripts), HashEmbedder())


def build_engine(settings: dict) -> Engine:
    clock = LogicalClock() if settings["clock"] == "logical" else SystemClock()
    return Engine(
        settings["data_dir"],
        build_gateway(settings),
        user_id=settings["user_id"],
        seed=settings["seed"],
        clock=clock,
    )
