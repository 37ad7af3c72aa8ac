"""
Run configuration files.
Plain-text `key = value` files supply CLI defaults; named configurations are
kept as JSON under ~/.nsfem/configs.
"""

import json
import os
import re
from typing import Dict, List, Optional

from errors import InvalidArgumentError

APP_DIR = os.path.join(os.path.expanduser("~"), ".nsfem")
CONFIG_DIR = os.path.join(APP_DIR, "configs")

_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


def normalize_key(key: str) -> str:
    return key.strip().replace("-", "_").lower()


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment, dashes and underscores in keys are interchangeable.

    Values stay strings; the CLI converts them with the type of the matching flag.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if not key:
            raise InvalidArgumentError(f"config line {lineno}: empty key")
        values[key] = value.strip()
    return values


def load_config_file(path: str) -> Dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def format_config_text(values: Dict[str, object]) -> str:
    lines = []
    for key, value in values.items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def split_list(value: str) -> List[str]:
    return [v.strip() for v in str(value).split(",") if v.strip()]


class RunConfigManager:
    """Saved named run configurations, one JSON file per name."""

    def __init__(self, config_dir: Optional[str] = None):
        self.config_dir = config_dir or CONFIG_DIR

    def _path(self, name: str) -> str:
        if not _NAME_RE.match(name or ""):
            raise InvalidArgumentError(f"invalid configuration name {name!r}")
        return os.path.join(self.config_dir, f"{name}.json")

    def ensure_dir(self):
        os.makedirs(self.config_dir, exist_ok=True)

    def list_configs(self) -> List[str]:
        if not os.path.isdir(self.config_dir):
            return []
        names = []
        for fn in os.listdir(self.config_dir):
            if fn.endswith(".json"):
                names.append(fn[:-5])
        return sorted(names)

    def load(self, name: str) -> Dict[str, object]:
        path = self._path(name)
        if not os.path.exists(path):
            raise InvalidArgumentError(f"no saved configuration named {name!r}")
        with open(path, "r", encoding="utf-8") as f:
            cfg = json.load(f)
        return cfg.get("parameters", {})

    def save(self, name: str, parameters: Dict[str, object], command: Optional[str] = None) -> str:
        self.ensure_dir()
        path = self._path(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"name": name, "command": command, "parameters": parameters}, f, indent=2)
        return path

    def delete(self, name: str) -> bool:
        path = self._path(name)
        if os.path.exists(path):
            os.remove(path)
            return True
        return False
