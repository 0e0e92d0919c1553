from dataclasses import dataclass, field
from typing import Iterator, List

import numpy as np

from common.errors import DataError
from ingestion.bundle import DatasetBundle

N_NEGATIVES = 99


@dataclass(frozen=True)
class RankingTask:
    user: int
    target: int
    negatives: np.ndarray

    @property
    def candidates(self) -> np.ndarray:
        """Target first, then the sampled negatives."""
        return np.concatenate([[self.target], self.negatives]).astype(np.int64)


@dataclass(frozen=True)
class RankingTasks:
    split: str
    tasks: List[RankingTask] = field(default_factory=list)
    skipped: int = 0

    def __iter__(self) -> Iterator[RankingTask]:
        return iter(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def users(self) -> np.ndarray:
        return np.array([t.user for t in self.tasks], dtype=np.int64)

    def candidate_matrix(self) -> np.ndarray:
        if not self.tasks:
            return np.empty((0, N_NEGATIVES + 1), dtype=np.int64)
        return np.stack([t.candidates for t in self.tasks])


def build_tasks(
    bundle: DatasetBundle,
    split: str,
    rng: np.random.Generator,
    n_negatives: int = N_NEGATIVES,
    verbose: bool = True,
) -> RankingTasks:
    """
    One task per user of `split` (valid or test): the held-out item plus
    `n_negatives` items drawn without replacement from the target items the
    user never interacted with in any split. Users with too few eligible
    items are skipped and counted.
    """
    if split not in ("valid", "test"):
        raise DataError(f"ranking tasks are built from 'valid' or 'test', got {split!r}")

    part = bundle.split(split)
    n_items = bundle.n_target_items
    tasks: List[RankingTask] = []
    skipped = 0

    order = np.argsort(part.user, kind="stable")
    for pos in order:
        u, target = int(part.user[pos]), int(part.item[pos])
        eligible = np.ones(n_items, dtype=bool)
        eligible[list(bundle.user_items[u])] = False
        pool = np.flatnonzero(eligible)
        if pool.size < n_negatives:
            skipped += 1
            continue
        negatives = rng.choice(pool, size=n_negatives, replace=False)
        tasks.append(RankingTask(user=u, target=target, negatives=negatives.astype(np.int64)))

    if verbose:
        print(f"[EVAL] {split}: {len(tasks)} ranking tasks, {n_negatives} negatives each")
        if skipped:
            print(f"[EVAL] WARNING {skipped} users skipped: fewer than {n_negatives} eligible negatives")

    return RankingTasks(split=split, tasks=tasks, skipped=skipped)
