import numpy as np
import pytest

from lotus.data import generate_synthetic
from lotus.detectors import DETECTORS, SEARCH_SPACE, PipelineConfig
from lotus.meta_trainer import (FAILED_AUC, SearchBudget, evaluate_config, mutate,
                                random_config, rank_key, search)


@pytest.fixture(scope="module")
def blob():
    ds = generate_synthetic("gauss_blob", 200, 3, 0.05, 0)
    return ds.features, ds.labels


def test_budget_is_respected(blob):
    res = search(*blob, SearchBudget(max_evaluations=7, seed=1))
    assert len(res.history) == 7
    assert len({c for c, _ in res.history}) == 7


def test_best_is_argmax_of_history(blob):
    res = search(*blob, SearchBudget(max_evaluations=20, seed=2))
    top = max(a for _, a in res.history)
    assert res.best_auc == top
    tied = sorted(c.to_json() for c, a in res.history if a == top)
    assert res.best.to_json() == tied[0]


def test_same_seed_same_result(blob):
    r1 = search(*blob, SearchBudget(15, seed=3))
    r2 = search(*blob, SearchBudget(15, seed=3))
    assert r1.to_dict() == r2.to_dict()


def test_threads_do_not_change_result(blob):
    r1 = search(*blob, SearchBudget(15, seed=4))
    r2 = search(*blob, SearchBudget(15, seed=4), threads=3)
    assert r1.to_dict() == r2.to_dict()


def test_zero_wall_clock_cap_raises(blob):
    with pytest.raises(RuntimeError):
        search(*blob, SearchBudget(10, wall_clock_cap_seconds=0.0))


def test_single_class_labels_rejected(blob):
    with pytest.raises(ValueError):
        search(blob[0], np.zeros(len(blob[0]), dtype=int))


def test_budget_validation():
    with pytest.raises(ValueError):
        SearchBudget(max_evaluations=0)
    with pytest.raises(ValueError):
        SearchBudget(wall_clock_cap_seconds=-1.0)


def test_failing_detector_scores_sentinel(monkeypatch, blob):
    def boom(cfg, x):
        raise np.linalg.LinAlgError("singular")
    monkeypatch.setattr("lotus.meta_trainer.fit_score", boom)
    assert evaluate_config(PipelineConfig.default("abod"), *blob) == FAILED_AUC
    res = search(*blob, SearchBudget(5))
    assert res.best_auc == FAILED_AUC and len(res.history) == 5


def test_random_and_mutated_configs_stay_in_grid():
    rng = np.random.default_rng(0)
    for _ in range(200):
        cfg = random_config(rng)
        child = mutate(cfg, rng)
        assert child.detector == cfg.detector and cfg.detector in DETECTORS
        for k, v in child.params.items():
            assert v in SEARCH_SPACE[child.detector][k]
        changed = sum(cfg.params[k] != child.params[k] for k in cfg.params)
        changed += cfg.standardize_input != child.standardize_input
        assert changed <= 1


def test_rank_key_orders_by_auc_then_json():
    a = PipelineConfig.default("knn")
    b = PipelineConfig.default("hbos")
    items = sorted([(a, 0.5), (b, 0.9), (a, 0.9)], key=rank_key)
    assert items[0][1] == 0.9 and items[0][0].to_json() < items[1][0].to_json()
    assert items[-1][1] == 0.5
