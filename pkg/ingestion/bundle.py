from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np

from common.archive import load_archive, save_archive
from common.errors import DataError

BUNDLE_KIND = "dataset_bundle"
SPLITS = ("train", "valid", "test")


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class RawInteraction:
    user_key: str
    item_key: str
    timestamp: int
    domain: Domain


@dataclass(frozen=True)
class InteractionSet:
    """
    Struct-of-arrays view of Interaction records (u, v, c) for one split.
    `cluster` is -1 until the semantics stage assigns clusters.
    """

    domain: Domain
    user: np.ndarray
    item: np.ndarray
    cluster: np.ndarray
    timestamp: np.ndarray

    def __len__(self) -> int:
        return int(self.user.shape[0])

    @classmethod
    def build(cls, domain: Domain, rows: List[Tuple[int, int, int]]) -> "InteractionSet":
        arr = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        return cls(
            domain=domain,
            user=arr[:, 0].copy(),
            item=arr[:, 1].copy(),
            cluster=np.full(arr.shape[0], -1, dtype=np.int64),
            timestamp=arr[:, 2].copy(),
        )

    def with_clusters(self, assignment: np.ndarray) -> "InteractionSet":
        return replace(self, cluster=np.asarray(assignment, dtype=np.int64)[self.item])

    def same_as(self, other: "InteractionSet") -> bool:
        return (
            self.domain == other.domain
            and np.array_equal(self.user, other.user)
            and np.array_equal(self.item, other.item)
            and np.array_equal(self.cluster, other.cluster)
            and np.array_equal(self.timestamp, other.timestamp)
        )


@dataclass(frozen=True)
class DatasetBundle:
    """
    Canonical integer ID spaces plus the leave-one-out splits.

    Users: target users take [0, n_target_users), source users follow.
    Items: target items take [0, n_target_items), source items follow.
    Source interactions are not split (all of them feed G_cross).
    """

    train: InteractionSet
    valid: InteractionSet
    test: InteractionSet
    source: InteractionSet
    user_keys: Tuple[str, ...]
    item_keys: Tuple[str, ...]
    n_target_users: int
    n_target_items: int
    meta: Dict[str, object] = field(default_factory=dict)

    # --------------------------------------------------
    # Tamaños
    # --------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def n_source_users(self) -> int:
        return self.n_users - self.n_target_users

    @property
    def n_source_items(self) -> int:
        return self.n_items - self.n_target_items

    def split(self, name: str) -> InteractionSet:
        if name not in SPLITS:
            raise DataError(f"Unknown split '{name}', expected one of {SPLITS}")
        return getattr(self, name)

    # --------------------------------------------------
    # V_u: all target items of u over train ∪ valid ∪ test
    # --------------------------------------------------
    @cached_property
    def user_items(self) -> List[frozenset]:
        buckets: List[set] = [set() for _ in range(self.n_target_users)]
        for part in (self.train, self.valid, self.test):
            for u, v in zip(part.user.tolist(), part.item.tolist()):
                buckets[u].add(v)
        return [frozenset(b) for b in buckets]

    @property
    def has_clusters(self) -> bool:
        return all(
            len(p) == 0 or int(p.cluster.min()) >= 0
            for p in (self.train, self.valid, self.test, self.source)
        )

    def with_clusters(self, assignment: np.ndarray) -> "DatasetBundle":
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.shape[0] != self.n_items:
            raise DataError(
                f"Cluster assignment covers {assignment.shape[0]} items, bundle has {self.n_items}"
            )
        return replace(
            self,
            train=self.train.with_clusters(assignment),
            valid=self.valid.with_clusters(assignment),
            test=self.test.with_clusters(assignment),
            source=self.source.with_clusters(assignment),
        )

    def same_as(self, other: "DatasetBundle") -> bool:
        return (
            self.user_keys == other.user_keys
            and self.item_keys == other.item_keys
            and self.n_target_users == other.n_target_users
            and self.n_target_items == other.n_target_items
            and all(
                getattr(self, s).same_as(getattr(other, s))
                for s in (*SPLITS, "source")
            )
        )

    # --------------------------------------------------
    # Estadísticas (columnas de la tabla de datasets)
    # --------------------------------------------------
    def stats(self) -> Dict[str, Dict[str, float]]:
        n_target_int = len(self.train) + len(self.valid) + len(self.test)
        n_source_int = len(self.source)
        return {
            "source": {
                "users": self.n_source_users,
                "items": self.n_source_items,
                "interactions": n_source_int,
                "int_per_user": round(n_source_int / max(self.n_source_users, 1), 2),
            },
            "target": {
                "users": self.n_target_users,
                "items": self.n_target_items,
                "interactions": n_target_int,
                "int_per_user": round(n_target_int / max(self.n_target_users, 1), 2),
                "train": len(self.train),
                "valid": len(self.valid),
                "test": len(self.test),
            },
        }


# ------------------------------------------------------------
# Persistencia
# ------------------------------------------------------------
def save_bundle(bundle: DatasetBundle, path: str) -> None:
    arrays = {
        "user_keys": np.array(bundle.user_keys, dtype=str),
        "item_keys": np.array(bundle.item_keys, dtype=str),
    }
    for name in (*SPLITS, "source"):
        part = getattr(bundle, name)
        arrays[f"{name}_user"] = part.user
        arrays[f"{name}_item"] = part.item
        arrays[f"{name}_cluster"] = part.cluster
        arrays[f"{name}_timestamp"] = part.timestamp

    meta = {
        "n_target_users": bundle.n_target_users,
        "n_target_items": bundle.n_target_items,
        "extra": bundle.meta,
    }
    save_archive(path, BUNDLE_KIND, arrays, meta)


def load_bundle(path: str) -> DatasetBundle:
    arrays, meta = load_archive(path, BUNDLE_KIND)

    parts = {}
    for name in (*SPLITS, "source"):
        parts[name] = InteractionSet(
            domain=Domain.SOURCE if name == "source" else Domain.TARGET,
            user=arrays[f"{name}_user"].astype(np.int64),
            item=arrays[f"{name}_item"].astype(np.int64),
            cluster=arrays[f"{name}_cluster"].astype(np.int64),
            timestamp=arrays[f"{name}_timestamp"].astype(np.int64),
        )

    return DatasetBundle(
        **parts,
        user_keys=tuple(str(k) for k in arrays["user_keys"].tolist()),
        item_keys=tuple(str(k) for k in arrays["item_keys"].tolist()),
        n_target_users=int(meta["n_target_users"]),
        n_target_items=int(meta["n_target_items"]),
        meta=dict(meta.get("extra", {})),
    )
