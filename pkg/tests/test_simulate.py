import math

import numpy as np
import pandas as pd
import pytest

from markset.core.covariance import CovarianceModel
from markset.errors import DomainError, EmbeddingError
from markset.processors.data_processor import DataProcessor
from markset.services.grid import GridSpec, RngSeed, cells_within, dense_distances
from markset.services.simulate import (
    GaussianFieldSampler,
    MarkedSetSample,
    excursion_sample,
    periodic_triangle_breakpoints,
    periodic_triangle_cov,
    periodic_triangle_cov_integral,
    periodic_triangle_sample,
    sample_grf,
    segment_singleton_sample,
)


def test_grid_geometry():
    grid = GridSpec.regular(8, 0.5)
    assert grid.extent == pytest.approx(4.0)
    assert grid.nodes == 8
    assert grid.lag_index(1.0) == 2
    assert GridSpec.regular(4, 1.0, dimension=2).coordinates().shape == (16, 2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dimension": 3, "extent": 1.0, "spacing": 0.1},
        {"dimension": 1, "extent": 1.05, "spacing": 0.1},
        {"dimension": 1, "extent": 1.0, "spacing": 0.0},
    ],
)
def test_grid_rejects_bad_geometry(kwargs):
    with pytest.raises(DomainError):
        GridSpec(**kwargs)


def test_footprint():
    assert cells_within(0.02, 0.01, 1).sum() == 5
    assert cells_within(0.01, 0.01, 2).sum() == 5


def test_dense_distances_do_not_wrap():
    d = dense_distances(GridSpec.regular(4, 0.5, periodic=False))
    assert d.shape == (4, 4)
    assert d[0, 3] == pytest.approx(1.5)
    np.testing.assert_allclose(d, d.T)


def test_streams_are_reproducible_per_replicate(seed):
    a = seed.stream(3).standard_normal(5)
    b = seed.stream(3).standard_normal(5)
    c = seed.stream(4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(DomainError):
        RngSeed(-1)


def test_circulant_sampler_moments(small_grid, gaussian_model, seed):
    sampler = GaussianFieldSampler(small_grid, gaussian_model)
    assert sampler.method == "circulant"
    fields = np.stack([sampler.sample(seed.stream(i)) for i in range(200)])
    assert fields.shape == (200, 256)
    assert abs(fields.mean()) < 0.1
    assert np.mean(fields**2) == pytest.approx(1.0, abs=0.1)
    lag_one = np.mean(fields * np.roll(fields, -10, axis=1))
    assert lag_one == pytest.approx(gaussian_model(1.0), abs=0.1)


def test_sample_grf_is_deterministic(small_grid, gaussian_model, seed):
    np.testing.assert_array_equal(
        sample_grf(small_grid, gaussian_model, seed, 2),
        sample_grf(small_grid, gaussian_model, seed, 2),
    )


def test_non_periodic_grid_is_embedded(gaussian_model, seed):
    grid = GridSpec.regular(64, 0.1, periodic=False)
    sampler = GaussianFieldSampler(grid, gaussian_model)
    assert sampler.sample(seed.stream(0)).shape == (64,)


def test_periodic_embedding_failure_raises():
    with pytest.raises(EmbeddingError) as info:
        GaussianFieldSampler(GridSpec.regular(100, 0.1), CovarianceModel.cosine())
    assert info.value.min_eigenvalue < 0


def test_exponential_field_lag_correlation(seed):
    grid = GridSpec.regular(512, 0.05)
    sampler = GaussianFieldSampler(grid, CovarianceModel.exponential())
    fields = np.stack([sampler.sample(seed.stream(i)) for i in range(400)])
    for lag in (10, 20):
        correlation = np.mean(fields * np.roll(fields, -lag, axis=1))
        assert correlation == pytest.approx(math.exp(-lag * grid.spacing), abs=0.06)


def test_zero_threshold_keeps_half_the_nodes(small_grid, gaussian_model, seed):
    fractions = [
        excursion_sample(sample_grf(small_grid, gaussian_model, seed, i), 0.0, small_grid).member_fraction()
        for i in range(200)
    ]
    assert np.mean(fractions) == pytest.approx(0.5, abs=0.05)


def test_excursion_sample_marks(seed):
    grid = GridSpec.regular(5, 1.0)
    values = np.array([-1.0, 0.5, 2.0, -0.2, 0.0])
    sample = excursion_sample(values, 0.0, grid)
    np.testing.assert_array_equal(sample.membership, [False, True, True, False, True])
    assert np.isnan(sample.marks[0])
    assert sample.mark_sums() == (2.5, 3)
    assert sample.member_fraction() == pytest.approx(0.6)


def test_sample_validation():
    grid = GridSpec.regular(3, 1.0)
    with pytest.raises(DomainError):
        MarkedSetSample(grid, [True, False, True], [1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        MarkedSetSample(grid, [True, False, True], [1.0, np.nan, 3.0], atomic=[False, True, False])


def test_shifted_sample_rolls_all_layers():
    grid = GridSpec.regular(4, 1.0)
    sample = MarkedSetSample(grid, [True, False, False, True], [1.0, np.nan, np.nan, 2.0], atomic=[False, False, False, True])
    moved = sample.shifted(1)
    np.testing.assert_array_equal(moved.membership, [True, True, False, False])
    np.testing.assert_array_equal(moved.atomic, [True, False, False, False])
    assert moved.marks[1] == 1.0


def test_triangle_sample(seed):
    p = 0.8
    sample = periodic_triangle_sample(p, seed)
    assert sample.member_fraction() == pytest.approx(p, abs=2 / 2000)
    marks = sample.marks[sample.membership]
    assert marks.min() >= 0.0
    assert marks.max() <= p / 2 + 1e-12
    assert 0.0 <= sample.model["xi"] < 1.0


@pytest.mark.parametrize("p", [0.5, 1.2])
def test_triangle_sample_rejects_p(p, seed):
    with pytest.raises(DomainError):
        periodic_triangle_sample(p, seed)


def test_triangle_sample_rejects_coarse_grid(seed):
    with pytest.raises(DomainError):
        periodic_triangle_sample(0.8, seed, grid=GridSpec.regular(100, 0.01))


@pytest.mark.parametrize("p", [0.7, 0.8, 0.9, 1.0])
def test_triangle_covariance_shape(p):
    assert periodic_triangle_cov(0.0, p) == pytest.approx(p * p / 48)
    assert periodic_triangle_cov(0.3, p) == pytest.approx(periodic_triangle_cov(0.7, p))
    assert periodic_triangle_cov(1.25, p) == pytest.approx(periodic_triangle_cov(0.25, p))
    for b in periodic_triangle_breakpoints(p):
        if 0 < b < 1:
            assert periodic_triangle_cov(b - 1e-9, p) == pytest.approx(periodic_triangle_cov(b + 1e-9, p), abs=1e-7)


def test_triangle_covariance_values():
    assert periodic_triangle_cov(0.2, 0.8) == pytest.approx(-0.0576 / 17.28)
    assert periodic_triangle_cov(0.4, 0.8) == pytest.approx(-0.0336 / 4.32)


@pytest.mark.parametrize("p,expected", [(0.7, -0.0022776), (0.8, -0.0013727), (0.9, -0.0003931)])
def test_triangle_covariance_integral(p, expected):
    assert periodic_triangle_cov_integral(p) == pytest.approx(expected, abs=1e-6)


def test_segment_singleton_sample(seed):
    sample = segment_singleton_sample(0.3, seed)
    assert sample.atomic.sum() == 4
    assert np.all(sample.marks[sample.atomic] == 0.0)
    total, count = sample.mark_sums()
    assert count == np.count_nonzero(sample.membership) - 4
    assert total > 0


def test_segment_singleton_custom_marks(seed):
    sample = segment_singleton_sample(0.25, seed, mark_rule=lambda u: np.ones_like(u))
    assert np.all(sample.marks[sample.membership] == 1.0)


@pytest.mark.parametrize("p", [0.0, 0.4])
def test_segment_singleton_rejects_p(p, seed):
    with pytest.raises(DomainError):
        segment_singleton_sample(p, seed)


def test_sample_export(tmp_path, seed):
    sample = segment_singleton_sample(0.3, seed)
    csv_path = DataProcessor.save_sample(sample, tmp_path / "sample.csv")
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ["x", "member", "atomic", "mark"]
    assert len(frame) == 800
    archive = np.load(DataProcessor.save_sample(sample, tmp_path / "sample.npz"))
    np.testing.assert_array_equal(archive["atomic"], sample.atomic)


def test_sample_export_errors_are_logged(tmp_path, seed, caplog):
    sample = segment_singleton_sample(0.3, seed)
    with pytest.raises(ValueError):
        DataProcessor.save_sample(sample, tmp_path / "sample.txt")
    assert "Error saving sample" in caplog.text
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    caplog.clear()
    with pytest.raises(OSError):
        DataProcessor.save_sample(sample, blocker / "sample.npz")
    assert "Error saving sample" in caplog.text
