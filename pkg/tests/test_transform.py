import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lotus.data import Dataset, generate_synthetic
from lotus.transform import TransformConfig, fast_ica, phi, standardize, subsample


def test_standardize_constant_column():
    assert standardize(np.array([[1.0], [1.0], [1.0]])).ravel().tolist() == [0, 0, 0]


def test_standardize_two_values():
    np.testing.assert_allclose(standardize(np.array([[0.0], [2.0]])).ravel(), [-1, 1])


def test_standardize_moments():
    x = np.random.default_rng(0).normal(3, 5, size=(20, 4))
    z = standardize(x)
    assert np.abs(z.mean(axis=0)).max() < 1e-10
    assert np.abs(z.var(axis=0) - 1).max() < 1e-10


def test_standardize_empty():
    with pytest.raises(ValueError):
        standardize(np.zeros((0, 3)))


@given(arrays(float, st.tuples(st.integers(1, 30), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardize_finite_and_centered(x):
    z = standardize(x)
    assert np.all(np.isfinite(z))
    assert np.abs(z.mean(axis=0)).max() < 1e-8


def test_subsample_identity_when_small():
    x = np.arange(20.0).reshape(10, 2)
    assert subsample(x, 20, 0) is x


def test_subsample_deterministic_subset():
    x = np.random.default_rng(1).normal(size=(100, 3))
    s1, s2 = subsample(x, 50, 7), subsample(x, 50, 7)
    assert s1.shape == (50, 3) and np.array_equal(s1, s2)
    rows = {tuple(r) for r in x}
    assert all(tuple(r) in rows for r in s1)
    assert len({tuple(r) for r in s1}) == 50


def test_ica_output_is_white():
    x = np.random.default_rng(2).normal(size=(400, 3)) @ np.array(
        [[1, 2, 0], [0, 1, 0], [3, 0, 1.0]])
    s, _ = fast_ica(standardize(x))
    np.testing.assert_allclose(np.cov(s.T, bias=True), np.eye(3), atol=1e-6)


def test_ica_recovers_uniform_sources():
    rng = np.random.default_rng(3)
    src = rng.uniform(-1, 1, size=(2000, 2))
    mix = np.array([[1.0, 0.6], [0.4, 1.2]])
    s, converged = fast_ica(standardize(src @ mix.T))
    assert converged
    corr = np.abs(np.corrcoef(np.c_[s, src].T)[:2, 2:])
    assert corr.max(axis=1).min() > 0.95 and corr.max(axis=0).min() > 0.95


def test_ica_fallback_returns_whitened_input():
    x = standardize(np.random.default_rng(4).normal(size=(300, 3)))
    s, converged = fast_ica(x, TransformConfig(ica_max_iter=1))
    if not converged:
        np.testing.assert_allclose(np.cov(s.T, bias=True), np.eye(3), atol=1e-6)


def test_ica_drops_null_directions():
    x = np.random.default_rng(5).normal(size=(200, 2))
    x = np.c_[x, x[:, 0] + x[:, 1]]
    s, _ = fast_ica(standardize(x))
    assert s.shape == (200, 2)


def test_phi_uniform_weights_and_cap():
    ds = generate_synthetic("gauss_blob", 5000, 3, 0.05, 0)
    m = phi(ds, TransformConfig(max_rows=2000))
    assert m.size == 2000 and abs(m.weights.sum() - 1) < 1e-12
    assert np.all(m.weights == m.weights[0])


def test_phi_deterministic_and_label_blind():
    ds = generate_synthetic("ring", 300, 3, 0.05, 1)
    flipped = Dataset(ds.features, 1 - ds.labels)
    m1, m2, m3 = phi(ds), phi(ds), phi(flipped)
    assert np.array_equal(m1.points, m2.points) and np.array_equal(m1.points, m3.points)


def test_phi_row_permutation_gives_same_point_set():
    ds = generate_synthetic("two_clusters", 200, 3, 0.05, 2)
    perm = np.random.default_rng(0).permutation(200)
    a = phi(ds).points
    b = phi(Dataset(ds.features[perm], ds.labels[perm])).points
    key = lambda p: np.lexsort(np.round(p, 8).T)  # noqa: E731
    np.testing.assert_allclose(a[key(a)], b[key(b)], atol=1e-7)


def test_phi_needs_two_rows():
    with pytest.raises(ValueError):
        phi(Dataset(np.ones((1, 2))))


def test_config_fingerprint_tracks_values():
    assert TransformConfig().fingerprint() == TransformConfig().fingerprint()
    assert TransformConfig().fingerprint() != TransformConfig(seed=1).fingerprint()
    with pytest.raises(ValueError):
        TransformConfig(max_rows=1)


@given(st.integers(3, 60), st.integers(1, 4), st.integers(0, 1000))
@settings(max_examples=25)
def test_phi_always_finite(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d))
    m = phi(Dataset(x))
    assert np.all(np.isfinite(m.points)) and m.size == n
