from collections import defaultdict
from typing import Dict, List, Sequence

from common.errors import DataError
from ingestion.bundle import Domain, DatasetBundle, InteractionSet, RawInteraction
from ingestion.filtering import MIN_HISTORY


def _index(keys) -> Dict[str, int]:
    return {k: i for i, k in enumerate(sorted(set(keys)))}


def split_leave_one_out(
    target_records: Sequence[RawInteraction],
    source_records: Sequence[RawInteraction] = (),
    verbose: bool = True,
) -> DatasetBundle:
    """
    Per target user: chronological order (ties keep input order), last -> test,
    second-last -> valid, the rest -> train. Source records are indexed but
    not split.
    """
    if not target_records:
        raise DataError("No target records to split")

    by_user: Dict[str, List[RawInteraction]] = defaultdict(list)
    for r in target_records:
        by_user[r.user_key].append(r)

    short = sorted(u for u, recs in by_user.items() if len(recs) < MIN_HISTORY)
    if short:
        raise DataError(
            f"{len(short)} target users have fewer than {MIN_HISTORY} interactions "
            f"(e.g. {short[:5]}); density filtering must run first"
        )

    # --------------------------------------------------
    # Espacios de IDs: target primero, source después
    # --------------------------------------------------
    t_users = _index(r.user_key for r in target_records)
    t_items = _index(r.item_key for r in target_records)
    s_users = _index(r.user_key for r in source_records)
    s_items = _index(r.item_key for r in source_records)

    n_tu, n_ti = len(t_users), len(t_items)

    rows = {"train": [], "valid": [], "test": []}
    for user_key in sorted(by_user):
        # sorted() is stable: equal timestamps keep input order
        history = sorted(by_user[user_key], key=lambda r: r.timestamp)
        u = t_users[user_key]
        for r in history[:-2]:
            rows["train"].append((u, t_items[r.item_key], r.timestamp))
        rows["valid"].append((u, t_items[history[-2].item_key], history[-2].timestamp))
        rows["test"].append((u, t_items[history[-1].item_key], history[-1].timestamp))

    source_rows = [
        (n_tu + s_users[r.user_key], n_ti + s_items[r.item_key], r.timestamp)
        for r in source_records
    ]

    user_keys = tuple(sorted(t_users, key=t_users.get)) + tuple(sorted(s_users, key=s_users.get))
    item_keys = tuple(sorted(t_items, key=t_items.get)) + tuple(sorted(s_items, key=s_items.get))

    bundle = DatasetBundle(
        train=InteractionSet.build(Domain.TARGET, rows["train"]),
        valid=InteractionSet.build(Domain.TARGET, rows["valid"]),
        test=InteractionSet.build(Domain.TARGET, rows["test"]),
        source=InteractionSet.build(Domain.SOURCE, source_rows),
        user_keys=user_keys,
        item_keys=item_keys,
        n_target_users=n_tu,
        n_target_items=n_ti,
    )

    if verbose:
        print(
            f"[SPLIT] train={len(bundle.train)} valid={len(bundle.valid)} "
            f"test={len(bundle.test)} source={len(bundle.source)}"
        )
    return bundle
