from typing import Iterable, Sequence

import numpy as np

from common.errors import DataError

MAX_TRIES = 20


class InteractionIndex:
    """Sorted (user, item) keys for vectorized membership tests."""

    def __init__(self, user_items: Sequence[Iterable[int]], n_items: int):
        self.n_items = n_items
        self.counts = np.array([len(s) for s in user_items], dtype=np.int64)
        keys = [u * n_items + np.fromiter(s, dtype=np.int64) for u, s in enumerate(user_items) if len(s)]
        self.keys = np.sort(np.concatenate(keys)) if keys else np.empty(0, dtype=np.int64)

    def contains(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        q = users.astype(np.int64) * self.n_items + items.astype(np.int64)
        pos = np.searchsorted(self.keys, q)
        pos = np.minimum(pos, max(self.keys.size - 1, 0))
        return (self.keys.size > 0) & (self.keys[pos] == q)

    def unseen(self, user: int) -> np.ndarray:
        """Target items the user never touched, ascending."""
        lo, hi = np.searchsorted(self.keys, [user * self.n_items, (user + 1) * self.n_items])
        seen = self.keys[lo:hi] - user * self.n_items
        return np.setdiff1d(np.arange(self.n_items), seen, assume_unique=True)


def sample_negatives(
    users: np.ndarray,
    index: InteractionIndex,
    rng: np.random.Generator,
    max_tries: int = MAX_TRIES,
) -> np.ndarray:
    """
    One negative per positive, uniform over the target items the user never
    touched in any split. Rejection sampling for `max_tries` rounds, then a
    direct draw from each remaining user's unseen items.
    """
    users = np.asarray(users, dtype=np.int64)
    full = index.counts[users] >= index.n_items
    if full.any():
        raise DataError(f"user {int(users[full][0])} interacted with every target item; no negative exists")

    neg = rng.integers(0, index.n_items, size=users.size)
    pending = np.flatnonzero(index.contains(users, neg))
    tries = 1
    while pending.size and tries < max_tries:
        neg[pending] = rng.integers(0, index.n_items, size=pending.size)
        pending = pending[index.contains(users[pending], neg[pending])]
        tries += 1

    for pos in pending:
        neg[pos] = rng.choice(index.unseen(int(users[pos])))
    return neg
