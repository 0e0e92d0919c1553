import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from evaluation.tasks import RankingTasks

DEFAULT_KS = (1, 5, 10)

# (users (n,), candidates (n, 100)) -> scores (n, 100)
Scorer = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EvalReport:
    ks: List[int]
    hr: Dict[int, float]
    ndcg: Dict[int, float]
    hr_ci: Dict[int, Optional[float]] = field(default_factory=dict)
    ndcg_ci: Dict[int, Optional[float]] = field(default_factory=dict)
    n_runs: int = 1
    n_tasks: int = 0
    skipped: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "ks": list(self.ks),
            "hr": {str(k): self.hr[k] for k in self.ks},
            "ndcg": {str(k): self.ndcg[k] for k in self.ks},
            "hr_ci": {str(k): self.hr_ci.get(k) for k in self.ks},
            "ndcg_ci": {str(k): self.ndcg_ci.get(k) for k in self.ks},
            "n_runs": self.n_runs,
            "n_tasks": self.n_tasks,
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "EvalReport":
        ks = [int(k) for k in data["ks"]]
        return cls(
            ks=ks,
            hr={k: float(data["hr"][str(k)]) for k in ks},
            ndcg={k: float(data["ndcg"][str(k)]) for k in ks},
            hr_ci={k: data.get("hr_ci", {}).get(str(k)) for k in ks},
            ndcg_ci={k: data.get("ndcg_ci", {}).get(str(k)) for k in ks},
            n_runs=int(data.get("n_runs", 1)),
            n_tasks=int(data.get("n_tasks", 0)),
            skipped=int(data.get("skipped", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ------------------------------------------------------------
# Posición del ítem objetivo
# ------------------------------------------------------------
def target_ranks(scores: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """
    1-based rank of column 0 (the held-out item) in a descending sort where
    equal scores are ordered by ascending item index.
    """
    target_score = scores[:, :1]
    target_item = candidates[:, :1]
    above = scores > target_score
    tied_before = (scores == target_score) & (candidates < target_item)
    return 1 + above.sum(axis=1) + tied_before.sum(axis=1)


def hit_ratio(ranks: np.ndarray, k: int) -> float:
    return float(np.mean(ranks <= k)) if ranks.size else 0.0


def ndcg(ranks: np.ndarray, k: int) -> float:
    """Single relevant item: DCG = 1/log2(rank + 1) within the cutoff, ideal DCG = 1."""
    if not ranks.size:
        return 0.0
    gains = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(gains.mean())


def embedding_scorer(user_emb: np.ndarray, item_emb: np.ndarray) -> Scorer:
    def score(users: np.ndarray, candidates: np.ndarray) -> np.ndarray:
        return np.einsum("nd,ncd->nc", user_emb[users], item_emb[candidates])
    return score


# ------------------------------------------------------------
# API pública
# ------------------------------------------------------------
def rank_and_score(
    tasks: RankingTasks,
    scorer: Scorer,
    ks: Sequence[int] = DEFAULT_KS,
    chunk_size: int = 1024,
) -> EvalReport:
    ks = sorted({int(k) for k in ks})
    users = tasks.users()
    candidates = tasks.candidate_matrix()

    ranks = np.empty(users.size, dtype=np.int64)
    for start in range(0, users.size, chunk_size):
        sl = slice(start, start + chunk_size)
        ranks[sl] = target_ranks(scorer(users[sl], candidates[sl]), candidates[sl])

    return EvalReport(
        ks=ks,
        hr={k: hit_ratio(ranks, k) for k in ks},
        ndcg={k: ndcg(ranks, k) for k in ks},
        n_tasks=int(users.size),
        skipped=tasks.skipped,
    )
