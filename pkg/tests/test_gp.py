import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgnp.gp import (
    Episode,
    EpisodeBatch,
    EqKernelSpec,
    NotPositiveDefiniteError,
    ProtocolConfig,
    cholesky,
    eq_kernel,
    kernel_matrix,
    make_heldout_set,
    make_test_episode,
    make_train_batch,
    sample_function_values,
)
from cgnp.seeds import derive_rng

SPEC = EqKernelSpec()  # length scale 0.4, unit variance, jitter 1e-6
PROTO = ProtocolConfig()


# ---------------------------------------------------------------------------
# kernel values
# ---------------------------------------------------------------------------


def test_eq_kernel_values():
    assert eq_kernel(0.0, 0.0, SPEC) == 1.0
    np.testing.assert_allclose(eq_kernel(0.0, 0.4, SPEC), math.exp(-0.5), rtol=1e-14)
    np.testing.assert_allclose(eq_kernel(-1.0, 1.0, SPEC), math.exp(-12.5), rtol=1e-14)


def test_kernel_matrix_values():
    k = kernel_matrix([0.0], EqKernelSpec(jitter=0.0))
    np.testing.assert_array_equal(k, [[1.0]])
    k = kernel_matrix([-1.0, 0.0, 1.0], SPEC)
    np.testing.assert_allclose(k[0, 1], math.exp(-3.125), rtol=1e-14)
    np.testing.assert_allclose(k[0, 2], math.exp(-12.5), rtol=1e-14)


@settings(deadline=None, max_examples=60)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=15), st.integers(0, 2**32 - 1))
def test_kernel_matrix_symmetry_and_range(xs, seed):
    k = kernel_matrix(xs, SPEC)
    assert np.array_equal(k, k.T)
    np.testing.assert_allclose(np.diag(k), SPEC.signal_variance + SPEC.jitter, rtol=1e-15)
    off = k[~np.eye(len(xs), dtype=bool)]
    assert np.all(off > 0.0) and np.all(off <= SPEC.signal_variance)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        EqKernelSpec(length_scale=0.0)
    with pytest.raises(ValueError):
        EqKernelSpec(jitter=-1e-9)


# ---------------------------------------------------------------------------
# cholesky
# ---------------------------------------------------------------------------


def test_cholesky_identity_and_scalar():
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_array_equal(cholesky([[4.0]]), [[2.0]])


def test_cholesky_hand_case():
    ell = cholesky([[2.0, 1.0], [1.0, 2.0]])
    expected = [[math.sqrt(2.0), 0.0], [1.0 / math.sqrt(2.0), math.sqrt(1.5)]]
    np.testing.assert_allclose(ell, expected, atol=1e-12)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky([[1.0, 2.0], [2.0, 1.0]])


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_cholesky_reconstructs_protocol_matrices(seed, n):
    xs = derive_rng(seed, 7).uniform(-2, 2, n)
    k = kernel_matrix(xs, SPEC)
    ell = cholesky(k)
    assert np.max(np.abs(ell @ ell.T - k)) <= 1e-10


def test_cholesky_succeeds_on_ten_thousand_protocol_draws():
    rng = np.random.default_rng(123)
    for _ in range(10_000):
        xs = rng.uniform(-2, 2, int(rng.integers(5, 21)))
        cholesky(kernel_matrix(xs, SPEC))  # must not raise


# ---------------------------------------------------------------------------
# GP sampling statistics
# ---------------------------------------------------------------------------


def test_sampling_is_deterministic_given_rng_state():
    xs = np.linspace(-2, 2, 7)
    a = sample_function_values(xs, SPEC, np.random.default_rng(5))
    b = sample_function_values(xs, SPEC, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_sampling_marginal_statistics():
    # Monte Carlo against the analytic prior: unit variance per point and
    # correlation exp(-0.5) at distance 0.4
    xs = np.array([-1.0, -0.6, 0.3, 0.7])
    rng = np.random.default_rng(42)
    draws = np.stack([sample_function_values(xs, SPEC, rng) for _ in range(10_000)])
    var = draws.var(axis=0)
    np.testing.assert_allclose(var, 1.0, atol=0.05)
    corr = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
    np.testing.assert_allclose(corr, math.exp(-0.5), atol=0.05)
    corr = np.corrcoef(draws[:, 2], draws[:, 3])[0, 1]
    np.testing.assert_allclose(corr, math.exp(-0.5), atol=0.05)


def test_sampling_mean_and_covariance_match_kernel():
    grid = np.linspace(-2, 2, 10)
    rng = np.random.default_rng(7)
    draws = np.stack([sample_function_values(grid, SPEC, rng) for _ in range(10_000)])
    np.testing.assert_allclose(draws.mean(axis=0), 0.0, atol=0.05)
    emp = np.cov(draws, rowvar=False, bias=True)
    np.testing.assert_allclose(emp, kernel_matrix(grid, SPEC), atol=0.05)


# ---------------------------------------------------------------------------
# training batches
# ---------------------------------------------------------------------------


def test_train_batch_shared_counts_and_interval():
    for index in (0, 1, 17):
        batch = make_train_batch(PROTO, SPEC, index)
        assert len(batch.episodes) == 64
        n_c, n_t = batch.n_context, batch.n_target
        assert 3 <= n_c <= 10 and 2 <= n_t <= 10
        for ep in batch.episodes:
            assert ep.n_context == n_c and ep.n_target == n_t
            for xs in (ep.x_c, ep.x_t):
                assert np.all(xs >= -2.0) and np.all(xs <= 2.0)


def test_train_batch_deterministic_and_order_independent():
    a = make_train_batch(PROTO, SPEC, 5)
    _ = make_train_batch(PROTO, SPEC, 2)
    b = make_train_batch(PROTO, SPEC, 5)
    for ea, eb in zip(a.episodes, b.episodes):
        assert np.array_equal(ea.x_c, eb.x_c) and np.array_equal(ea.y_c, eb.y_c)
        assert np.array_equal(ea.x_t, eb.x_t) and np.array_equal(ea.y_t, eb.y_t)


def test_train_batch_counts_vary_across_batches():
    pairs = {
        (make_train_batch(PROTO, SPEC, i).n_context, make_train_batch(PROTO, SPEC, i).n_target)
        for i in range(25)
    }
    assert len(pairs) > 3


def test_train_batch_index_validation():
    with pytest.raises(ValueError, match="batch_index"):
        make_train_batch(PROTO, SPEC, PROTO.train_batches)


# ---------------------------------------------------------------------------
# test episodes
# ---------------------------------------------------------------------------


def test_test_episode_grid_structure():
    ep = make_test_episode(PROTO, SPEC, 0)
    assert ep.n_context + ep.n_target == 400
    assert 3 <= ep.n_context <= 10
    grid = np.sort(np.concatenate([ep.x_c, ep.x_t]))
    np.testing.assert_allclose(grid[0], -2.0)
    np.testing.assert_allclose(grid[-1], 2.0)
    np.testing.assert_allclose(np.diff(grid), 4.0 / 399.0, rtol=1e-12)
    assert np.unique(ep.x_c).size == ep.n_context  # distinct context positions


def test_test_episode_deterministic():
    a = make_test_episode(PROTO, SPEC, 3)
    b = make_test_episode(PROTO, SPEC, 3)
    assert np.array_equal(a.x_c, b.x_c) and np.array_equal(a.y_t, b.y_t)


def test_test_and_heldout_streams_differ():
    test = make_test_episode(PROTO, SPEC, 0)
    held = make_heldout_set(PROTO, SPEC, 1)[0]
    assert not np.array_equal(test.y_t, held.y_t)


def test_episode_validation():
    with pytest.raises(ValueError):
        Episode([], [], [0.0], [0.0])
    with pytest.raises(ValueError):
        Episode([0.0], [0.0, 1.0], [0.0], [0.0])


def test_episode_batch_requires_shared_counts():
    a = Episode([0.0, 1.0], [0.0, 0.0], [0.5], [0.0])
    b = Episode([0.0], [0.0], [0.5], [0.0])
    with pytest.raises(ValueError, match="share"):
        EpisodeBatch((a, b))
