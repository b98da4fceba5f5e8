"""
Config Manager Module
=====================

Thread-safe access to heston-degen run files. A run file is plain text made of
named sections holding ``key = value`` lines::

    [model]
    sigma = 0.2     # vol of vol
    kappa = 2.0

    [run]
    x0 = -0.1, 0.0, 0.1

Features
--------
- Parses ``[model]``, ``[weights]``, ``[grid]`` and ``[run]`` sections.
- Unknown sections, unknown keys, duplicates and malformed lines raise
  ``ConfigError`` carrying the 1-based line number.
- Retrieves, sets, and deletes settings using dot-separated keys
  (``"model.kappa"``); typed getters report conversion errors with the line
  the value came from.

Usage
-----
from src.utils.heston_config_manager import ConfigManager

config = ConfigManager.load("benchmark.ini")
kappa = config.get_float("model.kappa")
config.set("run.steps", 800)

Design Notes
------------
- Values are stored as raw strings; typed getters convert on access.
- Uses ``RLock`` so a manager may be shared across threads.
"""

import re
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from src.utils.heston_errors import ConfigError
from src.utils.heston_logger import logger

SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][\w]*)\s*\]$")
ENTRY_RE = re.compile(r"^([A-Za-z_][\w]*)\s*=\s*(.*)$")
LIST_SPLIT_RE = re.compile(r"[,\s]+")

KNOWN_KEYS: Dict[str, Tuple[str, ...]] = {
    "model": ("sigma", "kappa", "theta", "rho", "r", "q", "lambda_risk"),
    "weights": ("gamma", "beta", "mu"),
    "grid": ("n_x", "n_xi", "x_min", "x_max", "xi_max", "grading"),
    "run": (
        "T",
        "steps",
        "scheme",
        "payoff",
        "K",
        "far_field",
        "boundary_difference",
        "x0",
        "v0",
        "output_every",
        "seed",
        "paths",
        "mc_steps",
        "antithetic",
        "lambda",
    ),
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


class ConfigManager:
    """
    Thread-safe view over one parsed run file.

    Provides methods to get, set, and delete settings using dotted keys and
    remembers the source line of every value for error reporting.
    """

    def __init__(self, source: Optional[Path] = None) -> None:
        self._lock: threading.RLock = threading.RLock()
        self._settings: Dict[str, Dict[str, str]] = {section: {} for section in KNOWN_KEYS}
        self._lines: Dict[str, int] = {}
        self.source = source

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ConfigManager":
        """Read and parse a run file; I/O failures become ``ConfigError``."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        manager = cls.from_text(text, source=path)
        logger.info(f"Config loaded from {path}")
        return manager

    @classmethod
    def from_text(cls, text: str, source: Optional[Path] = None) -> "ConfigManager":
        manager = cls(source=source)
        section: Optional[str] = None
        for number, raw in enumerate(text.splitlines(), start=1):
            line = _strip_comment(raw)
            if not line:
                continue
            section_match = SECTION_RE.match(line)
            if section_match:
                section = section_match.group(1)
                if section not in KNOWN_KEYS:
                    raise ConfigError(f"unknown section [{section}]", line=number)
                continue
            entry_match = ENTRY_RE.match(line)
            if not entry_match:
                raise ConfigError(f"malformed line {raw.strip()!r}", line=number)
            if section is None:
                raise ConfigError("key outside of any section", line=number)
            key, value = entry_match.group(1), entry_match.group(2).strip()
            if key not in KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]", line=number)
            dotted = f"{section}.{key}"
            if dotted in manager._lines:
                raise ConfigError(f"duplicate key '{dotted}'", line=number)
            if not value:
                raise ConfigError(f"empty value for '{dotted}'", line=number)
            manager._settings[section][key] = value
            manager._lines[dotted] = number
        return manager

    def _split(self, key: str) -> Tuple[str, str]:
        parts: List[str] = key.split(".")
        if len(parts) != 2 or parts[0] not in KNOWN_KEYS:
            raise ConfigError(f"invalid config key '{key}'")
        return parts[0], parts[1]

    def line_of(self, key: str) -> Optional[int]:
        return self._lines.get(key)

    def has(self, key: str) -> bool:
        with self._lock:
            section, name = self._split(key)
            return name in self._settings[section]

    def get(self, key: str) -> Optional[str]:
        """
        Retrieve a raw configuration value using dotted key notation.
        Returns None (and logs at debug level) when the key is absent.
        """
        with self._lock:
            section, name = self._split(key)
            value = self._settings[section].get(name)
            if value is None:
                logger.debug(f"Config key '{key}' not found.")
            return value

    def set(self, key: str, value: Any) -> None:
        with self._lock:
            section, name = self._split(key)
            if name not in KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key '{name}' in [{section}]")
            self._settings[section][name] = str(value)
            self._lines.pop(key, None)
            logger.debug(f"Config key '{key}' set to '{value}'.")

    def delete(self, key: str) -> None:
        with self._lock:
            section, name = self._split(key)
            if self._settings[section].pop(name, None) is None:
                logger.debug(f"Config key '{key}' not found for deletion.")
                return
            self._lines.pop(key, None)
            logger.debug(f"Config key '{key}' deleted.")

    def _convert(self, key: str, converter, kind: str, default: Any) -> Any:
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return converter(raw)
        except ValueError as exc:
            raise ConfigError(f"'{key}' expects {kind}, got {raw!r}", line=self.line_of(key)) from exc

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        return self._convert(key, float, "a number", default)

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        return self._convert(key, int, "an integer", default)

    def get_str(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self._convert(key, str, "text", default)

    def get_bool(self, key: str, default: Optional[bool] = None) -> Optional[bool]:
        def _to_bool(raw: str) -> bool:
            word = raw.strip().lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
            raise ValueError(raw)

        return self._convert(key, _to_bool, "a boolean", default)

    def get_float_list(self, key: str, default: Optional[List[float]] = None) -> Optional[List[float]]:
        def _to_list(raw: str) -> List[float]:
            return [float(token) for token in LIST_SPLIT_RE.split(raw.strip()) if token]

        return self._convert(key, _to_list, "a list of numbers", default)

    def snapshot(self) -> Dict[str, Dict[str, str]]:
        """Copy of the parsed settings, sections and keys in sorted order."""
        with self._lock:
            return {section: dict(sorted(values.items())) for section, values in sorted(self._settings.items())}
