"""
Platform configuration.

Values are layered in increasing precedence: built-in defaults, a JSON
config file, ``KGNET_*`` environment variables (``.env`` is loaded first
via python-dotenv) and finally explicit overrides such as CLI flags.
"""

import json
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from schemas.sparqlmlschema import Budget
from utils.enums import Priority
from utils.errors import ConfigError
from utils.namespaces import DEFAULT_DATA_GRAPH, KGMETA_GRAPH, is_absolute_iri

load_dotenv()

DEFAULT_CONFIG_PATH = Path("config/kgnet.json")


class PlatformConfig(BaseModel):
    """Every knob of the platform; see config/kgnet.json for the documented key set."""

    data_endpoint: Optional[str] = None
    data_graph: str = str(DEFAULT_DATA_GRAPH)
    kgmeta_endpoint: Optional[str] = None
    kgmeta_graph: str = str(KGMETA_GRAPH)
    gmlaas_url: Optional[str] = None

    db_url: str = "sqlite:///./kgnet.db"
    store_dir: str = "media/store"
    package_dir: str = "media/packages"
    cache_dir: str = "diskcache/predictions"
    method_profiles_path: str = "config/method_profiles.json"

    c_call_ms: float = Field(default=50.0, gt=0)
    c_item_ms: float = Field(default=0.01, gt=0)
    inference_parallelism: int = Field(default=8, gt=0)
    filtered_dictionary: bool = True

    default_max_memory: int = Field(default=50 * 2**30, gt=0)
    default_max_time: int = Field(default=3600, gt=0)
    default_priority: Priority = Priority.ModelScore

    sampler_page_size: int = Field(default=100_000, gt=0)
    request_timeout: float = Field(default=30.0, gt=0)
    split_seed: int = 0
    log_level: str = "INFO"
    host: str = "127.0.0.1"
    port: int = Field(default=8000, gt=0)

    @field_validator("data_endpoint", "kgmeta_endpoint", "gmlaas_url")
    def validate_url(cls, v):  # pylint: disable=no-self-argument
        """Service URLs must be absolute http(s) URLs when given."""
        if v in (None, ""):
            return None
        if not v.startswith(("http://", "https://")):
            raise ValueError(f"URL must be absolute http(s): {v}")
        return v.rstrip("/")

    @field_validator("data_graph", "kgmeta_graph")
    def validate_graph(cls, v):  # pylint: disable=no-self-argument
        """Graph names are absolute IRIs."""
        if not is_absolute_iri(v):
            raise ValueError(f"graph name must be an absolute IRI: {v}")
        return v


def _env_overrides() -> dict:
    values = {}
    for name in PlatformConfig.model_fields:
        env_value = os.getenv(f"KGNET_{name.upper()}")
        if env_value is not None:
            values[name] = env_value
    # legacy variable name
    if "db_url" not in values and os.getenv("DB_URL"):
        values["db_url"] = os.getenv("DB_URL")
    return values


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PlatformConfig:
    """
    Build the effective configuration.

    Args:
        path: JSON config file; ``KGNET_CONFIG`` or config/kgnet.json when omitted.
        overrides: highest-precedence values, e.g. parsed CLI flags. ``None``
            values are ignored.

    Raises:
        ConfigError: unreadable file or invalid values.
    """
    values: dict = {}
    config_path = Path(path or os.getenv("KGNET_CONFIG") or DEFAULT_CONFIG_PATH)
    if config_path.exists():
        try:
            values.update(json.loads(config_path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
    elif path:
        raise ConfigError(f"config file not found: {path}")

    values.update(_env_overrides())
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {k: v for k, v in values.items() if not k.startswith("_")}

    try:
        return PlatformConfig(**values)
    except ValidationError as exc:
        raise ConfigError("invalid configuration", errors=exc.errors(include_url=False)) from exc


def default_budget(config: PlatformConfig) -> Budget:
    """Budget applied to TrainGML files that omit ``Task Budget`` keys."""
    return Budget(max_memory_bytes=config.default_max_memory, max_time_seconds=config.default_max_time,
                  priority=config.default_priority)
