import numpy as np
import pytest

from zinbreg.data import (
    CountMatrix,
    CovariateMatrix,
    GroupAssignment,
    standardize_covariates,
    validate_inputs,
)


def make_counts(y):
    y = np.asarray(y)
    return CountMatrix(
        y,
        tuple(f"s{i}" for i in range(y.shape[0])),
        tuple(f"f{j}" for j in range(y.shape[1])),
    )


def random_counts(rng, n, p, high=50, zero_frac=0.3):
    """Random count matrix with zeros sprinkled in but no empty sample or
    feature."""
    y = rng.integers(1, high, size=(n, p))
    y[rng.random((n, p)) < zero_frac] = 0
    y[np.arange(n), rng.integers(0, p, size=n)] += 1
    y[rng.integers(0, n, size=p), np.arange(p)] += 1
    return make_counts(y)


def small_dataset(seed=42, n=10, p=10, n_covariates=2, zero_frac=0.4):
    rng = np.random.default_rng(seed)
    counts = random_counts(rng, n, p, high=8, zero_frac=zero_frac)
    covs = standardize_covariates(
        CovariateMatrix(
            rng.standard_normal((n, n_covariates)),
            tuple(f"c{r}" for r in range(n_covariates)),
        )
    )
    labels = 1 + (np.arange(n) % 2)
    groups = GroupAssignment(labels, 2)
    return validate_inputs(counts, covs, groups)


@pytest.fixture
def tiny_dataset():
    return small_dataset()
