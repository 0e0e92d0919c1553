from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from common.archive import load_archive, save_archive
from common.errors import DataError
from engine.adam import AdamState
from model.params import GROUPS, HyperParams, Parameters

CHECKPOINT_KIND = "checkpoint"


@dataclass
class Checkpoint:
    params: Parameters
    hp: HyperParams
    adam: AdamState
    rng_state: Dict
    epoch: int = 0
    best_epoch: int = 0
    best_valid: float = -1.0
    bad_epochs: int = 0
    dims: Dict[str, int] = field(default_factory=dict)

    def rng(self) -> np.random.Generator:
        """Generator positioned exactly where the checkpointed run left it."""
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng_state
        return rng


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    arrays = {f"param_{name}": arr for name, arr in ckpt.params.groups()}
    arrays.update(ckpt.adam.to_arrays())
    meta = {
        "hp": ckpt.hp.to_dict(),
        "rng_state": ckpt.rng_state,
        "adam_step": ckpt.adam.step,
        "epoch": ckpt.epoch,
        "best_epoch": ckpt.best_epoch,
        "best_valid": ckpt.best_valid,
        "bad_epochs": ckpt.bad_epochs,
        "dims": ckpt.dims,
    }
    save_archive(path, CHECKPOINT_KIND, arrays, meta)


def load_checkpoint(path: str) -> Checkpoint:
    arrays, meta = load_archive(path, CHECKPOINT_KIND)
    missing = [g for g in GROUPS if f"param_{g}" not in arrays]
    if missing:
        raise DataError(f"checkpoint '{path}' lacks parameter groups {missing}")

    return Checkpoint(
        params=Parameters(**{g: arrays[f"param_{g}"] for g in GROUPS}),
        hp=HyperParams(**meta["hp"]),
        adam=AdamState.from_arrays(arrays, int(meta["adam_step"])),
        rng_state=meta["rng_state"],
        epoch=int(meta["epoch"]),
        best_epoch=int(meta["best_epoch"]),
        best_valid=float(meta["best_valid"]),
        bad_epochs=int(meta["bad_epochs"]),
        dims={k: int(v) for k, v in meta.get("dims", {}).items()},
    )


def check_compatible(ckpt: Checkpoint, n_target_users: int, n_target_items: int, n_users: int, n_clusters: int) -> None:
    """The checkpoint must share the bundle's ID spaces."""
    expected = {
        "n_target_users": n_target_users,
        "n_target_items": n_target_items,
        "n_users": n_users,
        "n_clusters": n_clusters,
    }
    diff = {k: (ckpt.dims.get(k), v) for k, v in expected.items() if ckpt.dims.get(k) != v}
    if diff:
        raise DataError(f"checkpoint does not match the dataset ID spaces: {diff}")
