import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lotus.data import FAMILIES, generate_synthetic
from lotus.detectors import PipelineConfig
from lotus.evaluation import (LOTUS_COLUMN, ScoreTable, average_rank, loo_evaluate,
                              rope_test)
from lotus.meta_store import add_entry
from lotus.meta_trainer import SearchBudget, search
from lotus.metrics import roc_auc
from lotus.ot import SolverConfig

from oracles import hand_ranks, pair_count_auc


# --- AUC -------------------------------------------------------------------

def test_auc_perfect_and_tied():
    assert roc_auc([0.1, 0.2, 0.9], [0, 0, 1]) == 1.0
    assert roc_auc([1.0, 1.0, 1.0, 1.0], [0, 1, 0, 1]) == 0.5


@given(st.lists(st.integers(0, 5), min_size=4, max_size=40), st.integers(0, 10**6))
@settings(max_examples=60)
def test_auc_matches_pair_count(raw, seed):
    labels = np.random.default_rng(seed).integers(0, 2, len(raw))
    labels[0], labels[1] = 0, 1
    scores = np.array(raw, dtype=float)
    assert roc_auc(scores, labels) == pytest.approx(pair_count_auc(scores, labels))


def test_auc_input_checks():
    with pytest.raises(ValueError):
        roc_auc([1, 2], [1, 1])
    with pytest.raises(ValueError):
        roc_auc([1, np.nan], [0, 1])
    with pytest.raises(ValueError):
        roc_auc([1, 2], [0, 2])


# --- ranks -----------------------------------------------------------------

def test_average_rank_hand_example():
    t = ScoreTable(["d1", "d2"], ["A", "B", "C"], [[0.9, 0.8, 0.8], [0.5, 0.7, 0.6]])
    assert average_rank(t) == {"A": 2.0, "B": 1.75, "C": 2.25}


@given(st.integers(1, 8), st.integers(2, 5), st.integers(0, 10**6))
@settings(max_examples=40)
def test_average_rank_matches_hand_ranks(n, m, seed):
    vals = np.random.default_rng(seed).integers(0, 4, size=(n, m)) / 4.0
    t = ScoreTable([f"d{i}" for i in range(n)], [f"m{j}" for j in range(m)], vals)
    expected = np.mean([hand_ranks(list(r)) for r in vals], axis=0)
    got = average_rank(t)
    np.testing.assert_allclose([got[f"m{j}"] for j in range(m)], expected)


def test_average_rank_five_methods_ten_rows():
    vals = np.random.default_rng(42).integers(0, 5, size=(10, 5)) / 5.0
    t = ScoreTable([f"d{i}" for i in range(10)], list("ABCDE"), vals)
    expected = np.mean([hand_ranks(list(r)) for r in vals], axis=0)
    got = average_rank(t)
    np.testing.assert_allclose([got[m] for m in "ABCDE"], expected)


def test_average_rank_rejects_missing():
    t = ScoreTable(["d1", "d2"], ["A", "B"], [[0.9, np.nan], [0.5, 0.7]])
    with pytest.raises(ValueError):
        average_rank(t)
    sub, dropped = t.complete()
    assert dropped == ["d1"] and average_rank(sub) == {"A": 2.0, "B": 1.0}


def test_score_table_csv_round_trip(tmp_path):
    t = ScoreTable(["x", "y"], ["LOTUS", "knn"], [[0.1234567, np.nan], [1.0, 0.5]])
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["dataset,LOTUS,knn", "x,0.123457,", "y,1.000000,0.500000"]
    back = ScoreTable.from_csv(tmp_path / "t.csv")
    assert back.datasets == ["x", "y"] and np.isnan(back.values[0, 1])


# --- ROPE ------------------------------------------------------------------

def test_rope_identical_scores_are_equivalent():
    r = rope_test(np.full(10, 0.8), np.full(10, 0.8), n_samples=2000)
    assert r.p_rope == 1.0


def test_rope_clear_winner():
    r = rope_test(np.full(20, 0.9), np.full(20, 0.8), n_samples=2000)
    assert r.p_left == 1.0


def test_rope_probabilities_and_swap():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0.6, 1, 15), rng.uniform(0.6, 1, 15)
    r1 = rope_test(a, b, n_samples=3000, seed=4)
    r2 = rope_test(b, a, n_samples=3000, seed=4)
    assert r1.p_left + r1.p_rope + r1.p_right == pytest.approx(1.0)
    assert (r1.p_left, r1.p_rope, r1.p_right) == (r2.p_right, r2.p_rope, r2.p_left)


def test_rope_seeded_and_masses():
    a, b = np.linspace(0.5, 1, 8), np.linspace(0.55, 0.9, 8)
    r1 = rope_test(a, b, n_samples=500, seed=1, keep_masses=True, chunk=128)
    r2 = rope_test(a, b, n_samples=500, seed=1)
    assert r1.to_dict() == r2.to_dict()
    # pair masses over i <= j of a Dirichlet draw sum to (1 + sum w^2) / 2
    assert r1.masses.shape == (500, 3)
    assert np.all(r1.masses.sum(axis=1) > 0.5) and np.all(r1.masses.sum(axis=1) <= 1.0)


def test_rope_input_checks():
    with pytest.raises(ValueError):
        rope_test([0.1, 0.2], [0.1])
    with pytest.raises(ValueError):
        rope_test([0.1, np.nan], [0.1, 0.2])
    with pytest.raises(ValueError):
        rope_test([0.1, 0.2], [0.1, 0.2], rope=0)


# --- leave-one-out -----------------------------------------------------------

def test_loo_never_selects_the_query(tmp_path):
    for i, fam in enumerate(["gauss_blob", "ring", "two_clusters"]):
        add_entry(tmp_path, generate_synthetic(fam, 60, 2, 0.1, i),
                  PipelineConfig.default("knn"), 0.9, fam)
    scfg = SolverConfig(rank=3, max_outer_iter=20, shell_spreads=(32.0,))
    table, reports = loo_evaluate(tmp_path, scfg=scfg)
    assert table.methods[0] == LOTUS_COLUMN and len(table.methods) == 6
    assert table.datasets == ["gauss_blob", "ring", "two_clusters"]
    for name, rep in reports.items():
        assert rep.chosen_id != name and rep.excluded == [name]
    assert not np.isnan(table.values).any()
    assert table.column("knn").tolist() == table.column(LOTUS_COLUMN).tolist()


def test_loo_needs_two_entries(tmp_path):
    add_entry(tmp_path, generate_synthetic("ring", 40, 2, 0.1, 0),
              PipelineConfig.default("knn"), 0.9, "only")
    with pytest.raises(ValueError):
        loo_evaluate(tmp_path)


def test_lotus_beats_the_worst_baseline_on_six_families(tmp_path):
    for i, fam in enumerate(FAMILIES):
        ds = generate_synthetic(fam, 300, 3, 0.05, i)
        res = search(ds.features, ds.labels, SearchBudget(20, seed=0))
        add_entry(tmp_path, ds, res.best, res.best_auc, fam)
    table, _ = loo_evaluate(tmp_path)
    means = np.nanmean(table.values, axis=0)
    assert means[0] >= means[1:].min()
