"""Configuration loading for gatessl.

Layers are merged in increasing precedence: built-in defaults, the YAML
config file, ``GATESSL_*`` environment variables (``.env`` is honoured),
``--set key=value`` overrides and finally explicit CLI flags.
"""

import os
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from ..models.config import RunConfig
from .errors import ConfigurationError

# Load environment variables from .env file
load_dotenv()

ENV_KEYS: Dict[str, str] = {
    "GATESSL_DATA_DIR": "data.data_dir",
    "GATESSL_THREADS": "runtime.threads",
    "GATESSL_DEBUG": "runtime.debug",
    "GATESSL_OUT_DIR": "runtime.out_dir",
}


def set_dotted(tree: Dict[str, Any], dotted_key: str, value: Any) -> None:
    """Assign ``value`` at ``a.b.c`` inside a nested dictionary."""
    parts = dotted_key.split(".")
    if not all(parts):
        raise ConfigurationError(f"malformed key {dotted_key!r}", field=dotted_key)
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"{part!r} is not a section", field=dotted_key)
        node = child
    node[parts[-1]] = value


def expand_dotted(data: Mapping[str, Any]) -> Dict[str, Any]:
    """Turn ``{"train.epochs": 3}`` style keys into nested sections."""
    tree: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            value = expand_dotted(value)
        if "." in str(key):
            set_dotted(tree, str(key), value)
        elif isinstance(value, dict) and isinstance(tree.get(key), dict):
            tree[key] = deep_merge(tree[key], value)
        else:
            tree[key] = value
    return tree


def deep_merge(base: Mapping[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_override(text: str) -> Tuple[str, Any]:
    """Parse ``section.key=value``; the value is read as a YAML scalar or list."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} must look like key=value", field=text)
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"override {text!r} has an empty key", field=text)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"cannot parse value of {key}: {e}", field=key)
    return key, value


def read_config_file(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}", field="--config")
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid YAML in {path}: {e}", field="--config")
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping of sections", field="--config")
    return expand_dotted(data)


def from_env(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Collect overrides from ``GATESSL_*`` environment variables."""
    environ = os.environ if environ is None else environ
    tree: Dict[str, Any] = {}
    for var, dotted in ENV_KEYS.items():
        raw = environ.get(var)
        if raw is None or raw == "":
            continue
        if dotted == "runtime.debug":
            value: Any = raw.strip().lower() in ("1", "true", "yes", "on")
        elif dotted == "runtime.threads":
            value = yaml.safe_load(raw)
        else:
            value = raw
        set_dotted(tree, dotted, value)
    return tree


def validate(data: Mapping[str, Any]) -> RunConfig:
    """Build a RunConfig, reporting the first offending field by its dotted path."""
    try:
        return RunConfig.from_dict(dict(data))
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()) if p != "__root__")
        raise ConfigurationError(str(first.get("msg")), field=field or "config")


def load(
    path: Optional[Path] = None,
    overrides: Iterable[str] = (),
    flags: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
    base: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Merge every configuration layer and validate the result.

    ``base`` replaces the built-in defaults, e.g. with the configuration a
    checkpoint was trained with.
    """
    data: Dict[str, Any] = dict(base or {})
    if path is not None:
        data = deep_merge(data, read_config_file(path))
    data = deep_merge(data, from_env(environ))

    override_tree: Dict[str, Any] = {}
    for text in overrides:
        key, value = parse_override(text)
        set_dotted(override_tree, key, value)
    data = deep_merge(data, override_tree)

    flag_tree: Dict[str, Any] = {}
    for key, value in (flags or {}).items():
        if value is not None:
            set_dotted(flag_tree, key, value)
    data = deep_merge(data, flag_tree)
    return validate(data)


def save(config: RunConfig, path: Path) -> None:
    """Write the fully resolved configuration as YAML."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, default_flow_style=False, sort_keys=False)
