from collections import Counter
from enum import Enum
from typing import Dict, List, Tuple

from common.errors import DataError
from ingestion.bundle import RawInteraction


class FilterRole(str, Enum):
    SOURCE_DOMAIN = "source_domain"
    TARGET_DOMAIN = "target_domain"


# (user_min, user_max, item_min, item_max), inclusive.
# Dense source setting vs sparse target setting.
DENSITY_BOUNDS: Dict[FilterRole, Tuple[int, int, int, int]] = {
    FilterRole.SOURCE_DOMAIN: (3, 10, 10, 15),
    FilterRole.TARGET_DOMAIN: (3, 5, 5, 15),
}

MIN_HISTORY = 3


def density_filter(
    records: List[RawInteraction],
    role: FilterRole,
    bounds: Tuple[int, int, int, int] | None = None,
    verbose: bool = True,
) -> List[RawInteraction]:
    """
    Single simultaneous pass: user and item counts are measured on the
    input, and a record survives iff both its user and its item are in bounds.
    Not idempotent: a second pass may shrink the result further.
    """
    if len({r.domain for r in records}) > 1:
        raise DataError("density_filter expects records of a single domain")

    u_min, u_max, i_min, i_max = bounds or DENSITY_BOUNDS[role]

    user_counts = Counter(r.user_key for r in records)
    item_counts = Counter(r.item_key for r in records)

    kept_users = {u for u, n in user_counts.items() if u_min <= n <= u_max}
    kept_items = {v for v, n in item_counts.items() if i_min <= n <= i_max}

    kept = [r for r in records if r.user_key in kept_users and r.item_key in kept_items]

    if verbose:
        print(
            f"[FILTER] {role.value}: users [{u_min},{u_max}] -> {len(kept_users)}/{len(user_counts)}, "
            f"items [{i_min},{i_max}] -> {len(kept_items)}/{len(item_counts)}, "
            f"records {len(kept)}/{len(records)}"
        )

    if not kept:
        raise DataError(
            f"No {role.value} records survive the density filter "
            f"(users {u_min}-{u_max}, items {i_min}-{i_max}); relax the thresholds"
        )
    return kept


def drop_short_histories(
    records: List[RawInteraction],
    min_history: int = MIN_HISTORY,
    verbose: bool = True,
) -> List[RawInteraction]:
    """
    Removes users left with fewer than `min_history` records after filtering,
    so every remaining user can give one train, one valid and one test record.
    """
    counts = Counter(r.user_key for r in records)
    short = {u for u, n in counts.items() if n < min_history}
    if not short:
        return records

    if verbose:
        print(
            f"[FILTER] WARNING {len(short)} users fell below {min_history} interactions "
            f"after filtering and were dropped"
        )
    kept = [r for r in records if r.user_key not in short]
    if not kept:
        raise DataError(
            f"No user keeps {min_history} interactions after filtering; relax the thresholds"
        )
    return kept
