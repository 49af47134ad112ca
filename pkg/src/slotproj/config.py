"""Layered run configuration: flags > environment > config file > default.

The config file is a flat ``key = value`` text file whose keys mirror the
command-line flags one-to-one (kebab-case flag ``--max-attempts`` is key
``max_attempts`` and environment variable ``SLOTPROJ_MAX_ATTEMPTS``).
Unknown config-file keys are rejected so typos cannot silently no-op.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Callable, Mapping

from .errors import SlotprojError

ENV_PREFIX = "SLOTPROJ_"

_TRUE = frozenset({"1", "true", "yes", "on"})
_FALSE = frozenset({"0", "false", "no", "off"})


class ConfigError(SlotprojError):
    """Bad config file syntax or an unknown key."""


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat key=value file; '#' starts a comment, blank lines skip."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


class Settings:
    """Resolves option values through the flags > env > file > default chain.

    ``known_keys`` is the full set of option names the subcommand accepts;
    any config-file key outside it is rejected up front.
    """

    def __init__(
        self,
        args: Mapping[str, Any],
        known_keys: set[str],
        env: Mapping[str, str] | None = None,
    ):
        self._args = args
        self._env = os.environ if env is None else env
        config_path = args.get("config")
        self._file = read_config_file(config_path) if config_path else {}
        unknown = set(self._file) - known_keys
        if unknown:
            raise ConfigError(
                f"unknown config key(s): {', '.join(sorted(unknown))} "
                f"(valid: {', '.join(sorted(known_keys))})"
            )

    def get(
        self,
        key: str,
        default: Any = None,
        cast: Callable[[str], Any] | None = None,
    ) -> Any:
        value = self._args.get(key)
        if value is None:
            env_value = self._env.get(ENV_PREFIX + key.upper())
            if env_value is not None:
                value = env_value
            elif key in self._file:
                value = self._file[key]
        if value is None:
            return default
        if cast is not None and isinstance(value, str):
            try:
                return cast(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
        return value
