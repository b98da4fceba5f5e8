"""Installed versions of the numerical stack, recorded in every run manifest."""

from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as importlib_version
from typing import Dict, List, Tuple

from packaging import version

from src.utils.heston_logger import logger

MINIMUM_VERSIONS: Dict[str, str] = {
    "numpy": "1.22",
    "scipy": "1.8",
    "loguru": "0.6",
}


def get_version(package_name: str) -> str:
    try:
        return importlib_version(package_name)
    except PackageNotFoundError:
        return "unknown"


def version_ok(installed: str, minimum: str) -> bool:
    try:
        return version.parse(installed) >= version.parse(minimum)
    except version.InvalidVersion:
        return False


def package_versions() -> List[Tuple[str, str, bool]]:
    """(package, installed version, meets minimum) in name order."""
    rows = []
    for name in sorted(MINIMUM_VERSIONS):
        installed = get_version(name)
        ok = version_ok(installed, MINIMUM_VERSIONS[name])
        if not ok:
            logger.warning(f"{name} {installed} is older than the tested minimum {MINIMUM_VERSIONS[name]}")
        rows.append((name, installed, ok))
    return rows
