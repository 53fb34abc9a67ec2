"""Shared fixtures: small grids and the two KP variants."""
import pytest

from kp_spectral.config import Settings
from kp_spectral.model import KPParams
from kp_spectral.spectral import make_grid


@pytest.fixture
def grid():
    """64 x 32 grid on [-4 pi, 4 pi) x [-2 pi, 2 pi)."""
    return make_grid(4.0, 2.0, 64, 32)


@pytest.fixture
def line_grid():
    """Fine in x, four nodes in y: enough for y-independent data."""
    return make_grid(8.0, 1.0, 256, 4)


@pytest.fixture
def kp1():
    return KPParams(p=1, epsilon=-1)


@pytest.fixture
def kp2():
    return KPParams(p=1, epsilon=1)


@pytest.fixture
def settings(tmp_path):
    return Settings(workers=1, memory_budget_mb=4096.0, output_dir=str(tmp_path / "runs"))


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("KP_WORKERS", "KP_MEMORY_BUDGET_MB", "KP_OUTPUT_DIR", "KP_HEAVY_EVERY", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
