import os
import sys
import tempfile
from pathlib import Path

os.environ.setdefault("HESTON_DEGEN_NO_FILE_LOGS", "1")
os.environ.setdefault("HESTON_DEGEN_HOME", tempfile.mkdtemp(prefix="heston-degen-tests-"))
os.environ.setdefault("HESTON_DEGEN_LOG_LEVEL", "WARNING")

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import pytest  # noqa: E402

from src.core.heston_params import ModelParams, WeightParams, default_weights  # noqa: E402
from src.core.heston_spaces import make_grid  # noqa: E402

BENCHMARK_CONFIG = """\
[model]
sigma = 0.2
kappa = 2.0
theta = 0.04
rho = -0.5
r = 0.0
q = 0.0

[weights]
gamma = 2.5
beta = 2.0

[grid]
n_x = 41
n_xi = 21
x_min = -2.0
x_max = 2.0
xi_max = 1.0

[run]
T = 0.5
steps = 40
payoff = call
K = 100
x0 = 0.0
v0 = 0.04
paths = 2000
mc_steps = 50
seed = 7
"""


@pytest.fixture
def params() -> ModelParams:
    """Admissible constants: Feller margin 0.06, 2κθ/σ² = 4."""
    return ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=-0.5)


@pytest.fixture
def weights(params) -> WeightParams:
    return default_weights(params, gamma=2.5, beta=2.0)


@pytest.fixture
def small_grid():
    return make_grid(41, 21, -2.0, 2.0, 1.0)


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "benchmark.ini"
    path.write_text(BENCHMARK_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def out_dir(tmp_path) -> Path:
    return tmp_path / "out"
