"""Collocation sampling: grid construction, reflection bounds,
reproducibility, and batch coverage."""

import numpy as np
import pytest

from eigenpinn.errors import ConfigurationError
from eigenpinn.sampler import MeshSampler, eval_grid


def test_eval_grid_examples():
    assert np.array_equal(eval_grid((0.0, 1.0), 2), [0.0, 1.0])
    assert np.array_equal(eval_grid((0.0, 2.0), 3), [0.0, 1.0, 2.0])
    g = eval_grid((0.0, 2 * np.pi), 1024)
    assert np.allclose(np.diff(g), 2 * np.pi / 1023, rtol=1e-12)
    with pytest.raises(ConfigurationError):
        eval_grid((0.0, 1.0), 1)


def test_tiny_sigma_recovers_uniform_grid():
    sampler = MeshSampler((-1.5, 1.5), 64, sigma=1e-13, seed=1)
    batch = sampler.sample_batch(5)
    assert np.allclose(batch, np.linspace(-1.5, 1.5, 64), atol=1e-11)


def test_all_points_inside_domain():
    sampler = MeshSampler((-1.5, 1.5), 128, sigma=0.5, seed=3)
    for step in range(200):
        batch = sampler.sample_batch(step)
        assert batch.min() >= -1.5 and batch.max() <= 1.5
        assert np.all(np.diff(batch) >= 0)


def test_reproducible_in_seed_and_step():
    sampler = MeshSampler((0.0, 2 * np.pi), 256, seed=42)
    assert np.array_equal(sampler.sample_batch(7), sampler.sample_batch(7))
    assert not np.array_equal(sampler.sample_batch(7), sampler.sample_batch(8))
    other = MeshSampler((0.0, 2 * np.pi), 256, seed=43)
    assert not np.array_equal(sampler.sample_batch(7), other.sample_batch(7))


def test_coverage_default_sigma():
    # max gap between consecutive sorted points < 5 mesh spacings, every batch
    n = 512
    sampler = MeshSampler((-1.5, 1.5), n, seed=0)
    limit = 5.0 * 3.0 / n
    worst = 0.0
    for step in range(1000):
        batch = sampler.sample_batch(step)
        worst = max(worst, float(np.diff(batch).max()))
    assert worst < limit


def test_default_sigma_is_half_spacing():
    sampler = MeshSampler((0.0, 1.0), 11)
    assert np.isclose(sampler.jitter_sigma, 0.05)


def test_validation():
    with pytest.raises(ConfigurationError):
        MeshSampler((0.0, 1.0), 1)
    with pytest.raises(ConfigurationError):
        MeshSampler((0.0, 1.0), 8, sigma=0.0)
    with pytest.raises(ConfigurationError):
        MeshSampler((1.0, 0.0), 8)
