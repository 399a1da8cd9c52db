import numpy as np
import pytest

from src.data.core import DataHistogram, Universe
from src.data.noise import NoiseSource


@pytest.fixture
def zero_noise() -> NoiseSource:
    return NoiseSource(seed=0, zero_noise=True)


@pytest.fixture
def noise() -> NoiseSource:
    return NoiseSource(seed=12345)


@pytest.fixture
def single_edge_graph() -> DataHistogram:
    """V=3 with the single edge {0, 1}."""
    return DataHistogram.from_edges(3, [(0, 1)])


@pytest.fixture
def flat_db() -> DataHistogram:
    return DataHistogram(Universe(4), np.array([1.0, 1.0, 0.0, 0.0]))


@pytest.fixture
def runner(tmp_path, monkeypatch):
    from src.data.experiments import ExperimentRunner

    monkeypatch.setenv("IDC_RELEASE_THREADS", "2")
    return ExperimentRunner(
        saving_dir=str(tmp_path) + "/",
        database_file=str(tmp_path / "test.ddb"),
        log_file=str(tmp_path / "test.log"),
    )
