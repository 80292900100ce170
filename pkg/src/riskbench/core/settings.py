from __future__ import annotations

import json
import os
from pathlib import Path

from pydantic import BaseModel, ValidationError

from riskbench.constants import (
    APP_SLUG,
    CONFIG_FILENAME,
    DEFAULT_MASTER_ADDR,
    DEFAULT_MAX_PAYLOAD,
    HOME_ENV,
    MASTER_ADDR_ENV,
    RESULTS_FILENAME,
)
from riskbench.core.exceptions import ConfigurationError


class RiskbenchSettings(BaseModel):
    master_addr: str = DEFAULT_MASTER_ADDR
    log_level: str = "INFO"
    max_payload: int = DEFAULT_MAX_PAYLOAD
    connect_timeout: float = 30.0
    results_filename: str = RESULTS_FILENAME
    default_repeat: int = 3


def get_config_dir() -> Path:
    env_value = os.environ.get(HOME_ENV)
    if env_value:
        return Path(env_value).expanduser().resolve()
    return Path.home() / f".{APP_SLUG}"


def get_config_path() -> Path:
    return get_config_dir() / CONFIG_FILENAME


def resolve_master_addr(settings: RiskbenchSettings, flag_value: str | None = None) -> str:
    if flag_value:
        return flag_value
    env_value = os.environ.get(MASTER_ADDR_ENV)
    if env_value:
        return env_value
    return settings.master_addr


def parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(f"Address must look like host:port, got {addr!r}.")
    return host or "127.0.0.1", int(port)


def load_settings() -> RiskbenchSettings:
    config_path = get_config_path()
    if not config_path.exists():
        return RiskbenchSettings()
    try:
        data = json.loads(config_path.read_text())
        return RiskbenchSettings(**data)
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ConfigurationError(f"Invalid settings file {config_path}: {exc}") from exc


def save_settings(settings: RiskbenchSettings) -> None:
    config_dir = get_config_dir()
    config_dir.mkdir(parents=True, exist_ok=True)
    get_config_path().write_text(settings.model_dump_json(indent=2))
