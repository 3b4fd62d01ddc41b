import numpy as np
import pytest

import stexceed as sx


def intercept_xy(coords, times):
    return np.column_stack([np.ones(coords.shape[0]), coords[:, 0], coords[:, 1]])


def intercept_only(coords, times):
    return np.ones((coords.shape[0], 1))


def make_params(variance=1.0, corr_range=0.7, rho=0.5, nugget=0.0):
    return sx.CovarianceParams(
        spatial=sx.Exponential(variance=variance, range=corr_range),
        temporal=sx.Ar1(rho),
        nugget=sx.ConstantNugget(nugget))


@pytest.fixture(scope="session")
def fixture_model():
    """10-observation, zero-nugget model on the unit square at a single time."""
    rng = np.random.default_rng(7)
    coords = rng.random((10, 2))
    times = np.full(10, 1.0)
    values = rng.normal(size=10) + 2.0
    dataset = sx.Dataset(coords=coords, times=times, values=values,
                         covariate_builder=intercept_xy, target_time=1.0)
    return sx.build_model(dataset, make_params())


@pytest.fixture(scope="session")
def fixture_grid():
    """5x5 grid over the unit square (25 pixels)."""
    return sx.make_grid((0.0, 0.0, 1.0, 1.0), 5, 5)


@pytest.fixture(scope="session")
def fixture_predictions(fixture_model, fixture_grid):
    points = fixture_grid.points_at(fixture_model.dataset.target_time)
    return sx.uk_weight_matrix(fixture_model, points)


@pytest.fixture(scope="session")
def fixture_ensemble(fixture_model, fixture_grid, fixture_predictions):
    """B=5000 conditional ensemble on the shared fixture (criterion 4 scale)."""
    return sx.generate_ensemble(fixture_model, fixture_grid, 5000, 123,
                                predictions=fixture_predictions)
