import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lotus.detectors import (DEFAULT_PARAMS, DETECTORS, SEARCH_SPACE, PipelineConfig,
                             abod_score, average_path_length, fit_score, hbos_score,
                             iforest_score, knn_score, loda_score)
from lotus.transform import standardize

from oracles import abod_pair_loop, brute_knn, recount_hbos


def blob_plus_far_point(n=255, seed=0, d=2):
    x = np.random.default_rng(seed).normal(size=(n, d))
    return np.vstack([x, np.full(d, 12.0)])


# --- knn -------------------------------------------------------------------

def test_knn_collinear_equal_scores():
    s = knn_score(np.array([[0.0], [1.0], [2.0]]), 1, "largest")
    assert np.all(s == s[0])


def test_knn_far_point_strictly_highest():
    s = knn_score(blob_plus_far_point(), 1)
    assert s[-1] > np.delete(s, -1).max()


@pytest.mark.parametrize("method", ["largest", "mean", "median"])
def test_knn_matches_brute_force(method):
    x = np.random.default_rng(1).normal(size=(50, 3))
    np.testing.assert_allclose(knn_score(x, 5, method), brute_knn(x.tolist(), 5, method),
                               atol=1e-9)


def test_knn_k_out_of_range():
    with pytest.raises(ValueError):
        knn_score(np.zeros((5, 2)), 5)
    with pytest.raises(ValueError):
        knn_score(np.zeros((5, 2)), 0)


# --- hbos ------------------------------------------------------------------

def test_hbos_uniform_bins_equal_scores():
    x = np.repeat(np.arange(10.0), 3)[:, None] + 0.5
    s = hbos_score(x, 10)
    # every bin holds the same count, so every point sees the same density
    assert np.allclose(s, s[0])


def test_hbos_isolated_point_highest():
    x = np.r_[np.random.default_rng(2).normal(size=1000) * 0.1, 50.0][:, None]
    s = hbos_score(x, 10)
    assert s[-1] > np.delete(s, -1).max()


def test_hbos_matches_recount():
    x = np.random.default_rng(3).normal(size=(100, 2))
    np.testing.assert_allclose(hbos_score(x, 5), recount_hbos(x, 5), atol=1e-9)


def test_hbos_constant_feature_contributes_zero():
    x = np.c_[np.random.default_rng(4).normal(size=40), np.full(40, 3.0)]
    np.testing.assert_allclose(hbos_score(x, 7), hbos_score(x[:, :1], 7))


# --- iforest ---------------------------------------------------------------

def test_iforest_two_identical_points():
    s = iforest_score(np.ones((2, 3)), 10, 2)
    assert s[0] == s[1]


def test_iforest_far_point_ranks_first_in_most_seeds():
    x = blob_plus_far_point(255)
    hits = sum(np.argmax(iforest_score(x, 100, 256, seed)) == 255 for seed in range(100))
    assert hits >= 95


@given(st.integers(2, 80), st.integers(1, 4), st.integers(0, 1000))
@settings(max_examples=20)
def test_iforest_range(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d))
    s = iforest_score(x, 5, min(n, 16), seed)
    assert np.all((s > 0) & (s <= 1))


def test_path_length_normalizer():
    assert average_path_length(1) == 0 and average_path_length(2) == 1
    n = 256.0
    expected = 2 * (np.log(n - 1) + np.euler_gamma) - 2 * (n - 1) / n
    assert average_path_length(256) == pytest.approx(expected)


def test_iforest_max_samples_range():
    with pytest.raises(ValueError):
        iforest_score(np.zeros((10, 2)), 10, 11)


# --- loda ------------------------------------------------------------------

def test_loda_identical_points_equal():
    s = loda_score(np.ones((20, 3)), 10, 5)
    assert np.all(s == s[0])


def test_loda_far_point_highest():
    s = loda_score(blob_plus_far_point(200, 1, 4), 50, 10, seed=0)
    assert s[-1] > np.delete(s, -1).max()


def test_loda_seeded():
    x = np.random.default_rng(5).normal(size=(60, 5))
    assert np.array_equal(loda_score(x, 20, 10, 3), loda_score(x, 20, 10, 3))


# --- abod ------------------------------------------------------------------

def test_abod_ring_centre_vs_outside():
    t = np.linspace(0, 2 * np.pi, 38, endpoint=False)
    ring = np.c_[np.cos(t), np.sin(t)]
    x = np.vstack([ring, [[0.0, 0.0]], [[3.0, 0.0]]])
    s = abod_score(x, 10)
    assert s[38] < s[39]


def test_abod_symmetric_triangle():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    s = abod_score(x, 2)
    assert np.allclose(s, s[0])


def test_abod_matches_pair_loop():
    x = np.random.default_rng(6).normal(size=(30, 3))
    np.testing.assert_allclose(abod_score(x, 5), abod_pair_loop(x, 5), atol=1e-9)


def test_abod_all_pairs_degenerate():
    x = np.vstack([np.zeros((3, 2)), [[1.0, 1.0]]])
    s = abod_score(x, 2)
    assert s[0] == 0.0


# --- shared properties -----------------------------------------------------

@pytest.mark.parametrize("det", ["knn", "abod"])
def test_rigid_motion_keeps_ranking(det):
    x = np.random.default_rng(7).normal(size=(60, 3))
    rot, _ = np.linalg.qr(np.random.default_rng(8).normal(size=(3, 3)))
    cfg = PipelineConfig.default(det)
    s1, s2 = fit_score(cfg, x), fit_score(cfg, x @ rot + 2.0)
    np.testing.assert_array_equal(np.argsort(s1, kind="stable"), np.argsort(s2, kind="stable"))


@pytest.mark.parametrize("det", ["knn", "hbos", "abod"])
def test_duplicates_get_equal_scores(det):
    x = np.random.default_rng(9).normal(size=(40, 2))
    x = np.vstack([x, x[:1]])
    s = fit_score(PipelineConfig.default(det), x)
    assert s[0] == pytest.approx(s[-1], abs=1e-12)


@pytest.mark.parametrize("det", ["iforest", "loda"])
def test_seeded_detectors_reproducible(det):
    x = np.random.default_rng(10).normal(size=(300, 3))
    cfg = PipelineConfig.default(det)
    assert np.array_equal(fit_score(cfg, x), fit_score(cfg, x))


# --- configs and dispatch ----------------------------------------------------

def test_dispatch_matches_direct_call():
    x = np.random.default_rng(11).normal(size=(80, 3))
    cfg = PipelineConfig("knn", {"k": 5, "method": "largest"})
    assert np.array_equal(fit_score(cfg, x), knn_score(x, 5, "largest"))


def test_standardize_flag_equals_prescaled_input():
    x = np.random.default_rng(12).normal(size=(80, 3)) * [1, 10, 100]
    on = PipelineConfig("hbos", {"n_bins": 10}, True)
    off = PipelineConfig("hbos", {"n_bins": 10}, False)
    assert np.array_equal(fit_score(on, x), fit_score(off, standardize(x)))


def test_unknown_detector_and_bad_params():
    with pytest.raises(ValueError):
        PipelineConfig("ocsvm", {})
    with pytest.raises(ValueError):
        PipelineConfig("knn", {"k": 4, "method": "largest"})
    with pytest.raises(ValueError):
        PipelineConfig("knn", {"k": 5})
    with pytest.raises(ValueError):
        PipelineConfig("abod", {"k": True})


def test_defaults_lie_in_the_search_space():
    for det in DETECTORS:
        cfg = PipelineConfig.default(det)
        assert cfg.params == DEFAULT_PARAMS[det]
        assert set(cfg.params) == set(SEARCH_SPACE[det])


def test_json_is_canonical():
    cfg = PipelineConfig("iforest", {"max_samples": 128, "n_estimators": 50}, True)
    text = cfg.to_json()
    assert text == json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"))
    assert PipelineConfig.from_json(text) == cfg


def test_grid_values_clipped_to_small_data():
    x = np.random.default_rng(13).normal(size=(30, 2))
    s = fit_score(PipelineConfig("knn", {"k": 100, "method": "mean"}), x)
    np.testing.assert_allclose(s, knn_score(x, 29, "mean"))
    s = fit_score(PipelineConfig("iforest", {"n_estimators": 10, "max_samples": 512}), x)
    assert np.array_equal(s, iforest_score(x, 10, 30))


def test_knn_k5_on_blob_with_far_outliers():
    from lotus.data import generate_synthetic
    from lotus.metrics import roc_auc
    ds = generate_synthetic("gauss_blob", 500, 4, 0.05, 0)
    cfg = PipelineConfig("knn", {"k": 5, "method": "largest"})
    assert roc_auc(fit_score(cfg, ds.features), ds.labels) >= 0.95
