import os
import subprocess
import sys

import numpy as np
import pytest

from emerbench import _accel, kernels

BACKENDS = ["loop", "numpy"] + (["numba"] if _accel.HAS_NUMBA else [])


@pytest.mark.parametrize("backend", BACKENDS)
def test_local_level_backends_agree(rng, backend):
    y = rng.standard_normal((80, 5)).cumsum(axis=0)
    r = np.diff(y, axis=0).var(axis=0) / 2
    ref = kernels.local_level_smooth(y, r, 0.1 * r, backend="loop")
    np.testing.assert_allclose(kernels.local_level_smooth(y, r, 0.1 * r, backend=backend), ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_local_level_zero_variance_column_passes_through(backend):
    y = np.column_stack([np.full(10, 2.0), np.arange(10.0) ** 2])
    r = np.diff(y, axis=0).var(axis=0) / 2
    out = kernels.local_level_smooth(y, r, 0.1 * r, backend=backend)
    np.testing.assert_array_equal(out[:, 0], y[:, 0])


def test_local_level_matches_dense_gaussian_posterior(rng):
    # the RTS smoother returns the exact posterior mean of the local-level model
    # (diffuse prior on x0, so after y0 the state is N(y0, r); condition on the rest)
    n, r, q = 25, 0.7, 0.05
    y = rng.standard_normal(n).cumsum()
    idx = np.arange(n)
    prior_cov = r + q * np.minimum.outer(idx, idx)
    prior_mean = np.full(n, y[0])
    obs_cov = prior_cov[1:, 1:] + r * np.eye(n - 1)
    post = prior_mean + prior_cov[:, 1:] @ np.linalg.solve(obs_cov, y[1:] - prior_mean[1:])
    got = kernels.local_level_smooth(y[:, None], np.array([r]), np.array([q]), backend="numpy")[:, 0]
    np.testing.assert_allclose(got, post, atol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_window_stats_backends_agree(rng, backend):
    x = rng.standard_normal((4, 1000)) * 3 + 1
    ref = kernels.window_stats(x, 64, backend="loop")
    assert ref.shape == (15, 4, 6)
    np.testing.assert_allclose(kernels.window_stats(x, 64, backend=backend), ref, rtol=1e-12, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.window_stats(np.zeros((1, 4)), 2, backend="cuda")


def test_env_flag_disables_numba():
    env = dict(os.environ, EMERBENCH_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from emerbench import _accel, kernels; print(_accel.HAS_NUMBA, kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.split() == ["False", "numpy"]
