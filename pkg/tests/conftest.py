import pytest

from markset.core.covariance import CovarianceModel
from markset.schemas import ExperimentConfig
from markset.services.grid import GridSpec, RngSeed


@pytest.fixture
def seed():
    return RngSeed(12345)


@pytest.fixture
def small_grid():
    return GridSpec.regular(256, 0.1)


@pytest.fixture
def gaussian_model():
    return CovarianceModel.gaussian(1.0)


@pytest.fixture
def make_config(tmp_path):
    """ExperimentConfig writing into a per-test directory."""

    def _make(experiment, **fields):
        fields.setdefault("output_dir", tmp_path / "results")
        fields.setdefault("seed", 20240611)
        return ExperimentConfig(experiment=experiment, **fields)

    return _make
