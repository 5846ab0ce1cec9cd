import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import hydra
import yaml
from hydra import compose, initialize
from loguru import logger
from omegaconf import OmegaConf
from pydantic import ValidationError

from config import CONFIG_DIR
from config.base import Settings
from limset.errors import ConfigError

ROOT_DIR = Path(__file__).parent.parent


def _validation_diagnostics(err: ValidationError) -> list[tuple[str, str]]:
    return [(".".join(str(p) for p in e["loc"]) or "<root>", e["msg"]) for e in err.errors()]


def build_settings(cfg_dict: dict[str, Any], source: str) -> Settings:
    try:
        return Settings(**cfg_dict)
    except ValidationError as e:
        raise ConfigError(f"invalid config {source}", _validation_diagnostics(e)) from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config {source}", [("<root>", str(e))]) from e


def load_hydra_settings(config_name: str = "default", overrides: Optional[list[str]] = None) -> Settings:
    """Load a named preset from configs/ through hydra's compose API."""
    with initialize(version_base=hydra.__version__, config_path="../configs"):
        cfg = compose(config_name=config_name, overrides=overrides or [])
        cfg_dict: dict[str, Any] = dict(OmegaConf.to_container(cfg, resolve=True))  # type: ignore[arg-type]
    logger.debug(f"Composed preset {config_name}: {sorted(cfg_dict)}")
    return build_settings(cfg_dict, f"preset {config_name!r}")


def load_settings_document(path: str | Path) -> Settings:
    """Read a JSON (or YAML) config document; syntax errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}", [("<file>", str(e))]) from e

    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {path}", [(f"line {e.lineno}, column {e.colno}", e.msg)]) from e
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "<file>"
            raise ConfigError(f"malformed YAML in {path}", [(loc, str(getattr(e, "problem", e)))]) from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping", [("<root>", f"got {type(data).__name__}")])
    return build_settings(data, str(path))


def resolve_settings(config: Optional[str]) -> Settings:
    """--config accepts a file path or the name of a preset under configs/."""
    if config is None:
        return load_hydra_settings("default")
    path = Path(config)
    if path.exists():
        return load_settings_document(path)
    if (CONFIG_DIR / f"{config}.yaml").exists():
        return load_hydra_settings(config)
    raise ConfigError(f"config {config!r} is neither a file nor a preset", [("--config", f"presets live in {CONFIG_DIR}")])


def settings_document(settings: Settings) -> dict[str, Any]:
    """Fully resolved config with every default made explicit."""
    doc = settings.model_dump(mode="json")
    doc.pop("output", None)
    return doc


def settings_hash(settings: Settings) -> str:
    canonical = json.dumps(settings_document(settings), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
