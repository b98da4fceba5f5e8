"""
Centralized constants for heston-degen.

Constants include:
- OS detection and platform-specific directories for logs and run data.
- Numerical thresholds shared by the solver and the verifiers.
- The exit-code contract of the command-line interface.

Directories are created when the module is imported.
"""

import math
import os
import platform
from pathlib import Path

APP_NAME: str = "heston-degen"

OS_NAME: str = platform.system()  # Windows ; Darwin ; Linux

USER_HOME_DIR: Path = Path.home()

# OS Specific Constants
_home_override = os.environ.get("HESTON_DEGEN_HOME")
if _home_override:
    APP_DIR: Path = Path(_home_override)
elif OS_NAME == "Windows":
    APP_DIR: Path = Path(os.environ.get("LOCALAPPDATA", USER_HOME_DIR / "AppData" / "Local")) / "HestonDegen"
elif OS_NAME == "Darwin":  # macOS
    APP_DIR: Path = USER_HOME_DIR / "Library" / "Application Support" / "HestonDegen"
else:  # Linux and other UNIX-like
    APP_DIR: Path = USER_HOME_DIR / ".local" / "share" / "heston-degen"

APP_LOG_DIR: Path = APP_DIR / "logs"
APP_RUNS_DIR: Path = APP_DIR / "runs"

# Parameter gates
BETA_STRICT_BOUND: float = (1.0 + math.sqrt(17.0)) / 2.0
BETA_SLACK: float = 1e-3

# Grid defaults
DEFAULT_X_HALF_WIDTH: float = 6.0
DEFAULT_XI_MAX_FACTOR: float = 5.0
DEFAULT_GRADING: float = 2.0
TRACE_GRADING: float = 3.0

# Solver guards
BLOWUP_GROWTH: float = 1e12
RESIDUAL_TOLERANCE: float = 1e-8
DENSE_EIGEN_LIMIT: int = 2500
LANCZOS_MAXITER: int = 5000
DEFAULT_MAX_UNKNOWNS: int = int(os.environ.get("HESTON_DEGEN_MAX_UNKNOWNS", "400000") or 400000)

# Verifier constants
TOL_GRID_FACTOR: float = 10.0
BARRIER_TIME_SAMPLES: int = 32
OMEGA_SAFETY: float = 2.0

# Exit codes
EXIT_OK: int = 0
EXIT_DOMAIN_FAILURE: int = 1
EXIT_USAGE: int = 2
EXIT_NUMERIC: int = 3

for _directory in (APP_LOG_DIR, APP_RUNS_DIR):
    try:
        _directory.mkdir(parents=True, exist_ok=True)
    except OSError:
        pass

if __name__ == "__main__":
    # for debug, to check os specific variables
    info = {
        "OS_NAME": OS_NAME,
        "APP_DIR": str(APP_DIR),
        "APP_LOG_DIR": str(APP_LOG_DIR),
        "APP_RUNS_DIR": str(APP_RUNS_DIR),
        "BETA_STRICT_BOUND": BETA_STRICT_BOUND,
    }
    for key, value in info.items():
        print(f"{key}: {value}")
