import json
import math

import numpy as np
import pytest

from common.errors import DataError, ScdgnError
from evaluation.aggregate import aggregate_runs, format_table, mean_and_halfwidth, relative_improvement, table_columns
from evaluation.metrics import EvalReport, embedding_scorer, hit_ratio, ndcg, rank_and_score, target_ranks
from evaluation.tasks import RankingTask, RankingTasks, build_tasks
from evaluation.utils_logging import log_epoch, log_evaluation


# ------------------------------------------------------------
# Rangos y métricas
# ------------------------------------------------------------
def test_target_rank_counts_higher_scores():
    scores = np.array([[0.5, 0.9, 0.7, 0.1]])
    candidates = np.array([[10, 11, 12, 13]])
    assert target_ranks(scores, candidates).tolist() == [3]


def test_ties_are_broken_by_item_index():
    scores = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
    candidates = np.array([[5, 2, 9], [1, 2, 9]])
    assert target_ranks(scores, candidates).tolist() == [2, 1]


def test_rank_three_metrics():
    ranks = np.array([3])
    assert ndcg(ranks, 5) == pytest.approx(0.5)
    assert ndcg(ranks, 2) == 0.0
    assert hit_ratio(ranks, 3) == 1.0
    assert hit_ratio(ranks, 2) == 0.0


def test_ndcg_at_rank_one_is_one():
    assert ndcg(np.array([1, 1]), 1) == 1.0
    assert hit_ratio(np.array([], dtype=int), 5) == 0.0


def _tasks(n, n_candidates=100, seed=0):
    rng = np.random.default_rng(seed)
    tasks = [
        RankingTask(user=u, target=0, negatives=rng.permutation(np.arange(1, 500))[: n_candidates - 1])
        for u in range(n)
    ]
    return RankingTasks(split="test", tasks=tasks)


def test_random_scores_give_chance_level_hit_ratio():
    rng = np.random.default_rng(1)
    report = rank_and_score(_tasks(5000), lambda users, cand: rng.random(cand.shape), ks=[5, 10])
    assert report.hr[5] == pytest.approx(0.05, abs=0.01)
    assert report.hr[10] == pytest.approx(0.10, abs=0.015)
    assert report.n_tasks == 5000


def test_embedding_scorer_ranks_the_best_item_first():
    user_emb = np.array([[1.0, 0.0]])
    item_emb = np.array([[0.0, 1.0], [2.0, 0.0], [1.0, 0.0]])
    tasks = RankingTasks(split="test", tasks=[RankingTask(user=0, target=1, negatives=np.array([0, 2]))])
    report = rank_and_score(tasks, embedding_scorer(user_emb, item_emb), ks=[1])
    assert report.hr[1] == 1.0 and report.ndcg[1] == 1.0


def test_scoring_in_chunks_gives_the_same_report():
    tasks = _tasks(50)
    scorer = embedding_scorer(np.random.default_rng(2).normal(size=(50, 4)), np.random.default_rng(3).normal(size=(500, 4)))
    whole = rank_and_score(tasks, scorer, ks=[1, 5, 10])
    chunked = rank_and_score(tasks, scorer, ks=[10, 1, 5], chunk_size=7)
    assert whole == chunked


# ------------------------------------------------------------
# Tareas de ranking
# ------------------------------------------------------------
def test_task_negatives_are_unseen_distinct_items(small_data):
    bundle, _ = small_data
    tasks = build_tasks(bundle, "test", np.random.default_rng(0), verbose=False)
    assert len(tasks) == bundle.n_target_users and tasks.skipped == 0

    cand = tasks.candidate_matrix()
    assert cand.shape == (bundle.n_target_users, 100)
    for task in tasks:
        assert task.target == int(bundle.test.item[bundle.test.user == task.user][0])
        assert len(set(task.negatives.tolist())) == 99
        assert not set(task.negatives.tolist()) & bundle.user_items[task.user]


def test_tasks_depend_only_on_the_seed(small_data):
    bundle, _ = small_data
    a = build_tasks(bundle, "valid", np.random.default_rng(9), verbose=False)
    b = build_tasks(bundle, "valid", np.random.default_rng(9), verbose=False)
    np.testing.assert_array_equal(a.candidate_matrix(), b.candidate_matrix())


def test_users_without_enough_negatives_are_skipped(small_data):
    bundle, _ = small_data
    tasks = build_tasks(bundle, "test", np.random.default_rng(0), n_negatives=107, verbose=False)
    assert len(tasks) == 0
    assert tasks.skipped == bundle.n_target_users


def test_tasks_come_from_held_out_splits(small_data):
    with pytest.raises(DataError):
        build_tasks(small_data[0], "train", np.random.default_rng(0), verbose=False)


# ------------------------------------------------------------
# Agregación entre semillas
# ------------------------------------------------------------
def test_t_interval_for_two_runs():
    mean, half = mean_and_halfwidth([0.4, 0.6])
    assert mean == pytest.approx(0.5)
    assert half == pytest.approx(12.706 * 0.1, rel=1e-3)


def test_single_run_has_no_interval():
    assert mean_and_halfwidth([0.3]) == (0.3, None)


def _report(hr5, ndcg5=0.1, ks=(1, 5, 10)):
    ks = list(ks)
    return EvalReport(ks=ks, hr={k: hr5 for k in ks}, ndcg={k: ndcg5 for k in ks}, n_tasks=10)


def test_aggregate_runs():
    agg = aggregate_runs([_report(0.4), _report(0.6)])
    assert agg.n_runs == 2
    assert agg.hr[5] == pytest.approx(0.5)
    assert agg.hr_ci[5] == pytest.approx(1.2706, rel=1e-3)
    assert agg.ndcg_ci[5] == pytest.approx(0.0)
    assert EvalReport.from_dict(json.loads(agg.to_json())) == agg

    with pytest.raises(ScdgnError):
        aggregate_runs([_report(0.4), _report(0.6, ks=(1, 5))])
    with pytest.raises(ScdgnError):
        aggregate_runs([])


def test_relative_improvement():
    assert relative_improvement(_report(0.3), _report(0.2), "hr", 5) == pytest.approx(0.5)
    assert relative_improvement(_report(0.3), _report(0.0), "hr", 5) is None


def test_table_leads_with_the_headline_columns():
    assert table_columns([1, 5, 10])[:3] == [("hr", 1), ("hr", 5), ("ndcg", 5)]
    assert ("ndcg", 10) in table_columns([1, 5, 10])

    text = format_table({"full": aggregate_runs([_report(0.4), _report(0.6)]), "no-si": _report(0.25)}, baseline="no-si")
    lines = text.splitlines()
    assert lines[0].split()[:4] == ["method", "HR@1", "HR@5", "NDCG@5"]
    assert "0.500 ± 1.271" in text
    assert "improv. full vs no-si" in text and "+100.00%" in text


# ------------------------------------------------------------
# Registros
# ------------------------------------------------------------
def test_epoch_log_has_no_wall_clock(tmp_path):
    path = str(tmp_path / "train_log.jsonl")
    record = log_epoch(path, 1, {"bpr": 1.0, "rsp": 0.1, "rsu": 0.2, "rsc": 0.3, "total": 2.0}, {"valid_HR@5": 0.2}, True)
    assert record["L_rs"] == pytest.approx(0.6)
    assert record["L_dr"] == 0.0
    assert not any("time" in key for key in record)
    assert json.loads((tmp_path / "train_log.jsonl").read_text(encoding="utf-8")) == record


def test_evaluation_audit_record(tmp_path):
    path = str(tmp_path / "logs" / "evaluations.jsonl")
    log_evaluation(_report(0.2), {"variant": "full"}, output_path=path, execution_id="run-1")
    log_evaluation(aggregate_runs([_report(0.01), _report(0.03)]), {"variant": "no-si"}, output_path=path)

    first, second = [json.loads(l) for l in open(path, encoding="utf-8")]
    assert first["execution_id"] == "run-1"
    assert first["flags"] == {"has_interval": False, "beats_random_hr5": True, "has_skipped_users": False}
    assert second["flags"]["has_interval"] and not second["flags"]["beats_random_hr5"]
    assert second["execution_id"] != first["execution_id"]
    assert math.isfinite(second["report"]["hr"]["5"])


def test_metrics_match_brute_force_reranking():
    rng = np.random.default_rng(4)
    tasks = _tasks(1000, seed=5)
    cand = tasks.candidate_matrix()
    # coarse scores so ties are common
    scores = rng.integers(0, 20, size=cand.shape).astype(float)
    report = rank_and_score(tasks, lambda users, c: scores[users], ks=[1, 5, 10])

    ranks = []
    for row_scores, row_items in zip(scores, cand):
        order = sorted(range(row_items.size), key=lambda j: (-row_scores[j], row_items[j]))
        ranks.append(order.index(0) + 1)
    ranks = np.array(ranks)
    for k in (1, 5, 10):
        assert report.hr[k] == float(np.mean(ranks <= k))
        assert report.ndcg[k] == pytest.approx(float(np.mean(np.where(ranks <= k, 1 / np.log2(ranks + 1), 0.0))), abs=1e-15)
