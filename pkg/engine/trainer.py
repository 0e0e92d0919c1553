import copy
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from common.errors import NumericError
from engine.adam import AdamState, adam_step
from engine.backward import backward
from engine.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from engine.sampling import InteractionIndex, sample_negatives
from evaluation.metrics import EvalReport, embedding_scorer, rank_and_score
from evaluation.tasks import RankingTasks, build_tasks
from evaluation.utils_logging import log_epoch
from graphs.bipartite import BipartiteGraph
from ingestion.bundle import DatasetBundle
from model.forward import Batch, ModelInputs, forward, score_embeddings
from model.params import HyperParams, Parameters, init_parameters

CHECKPOINT_FILE = "checkpoint.bin"
LAST_FILE = "last.bin"
LOG_FILE = "train_log.jsonl"

# validation tasks get their own stream so training draws do not shift them
VALID_SEED_OFFSET = 7919


def model_inputs(
    bundle: DatasetBundle,
    item_vectors: np.ndarray,
    cluster_vectors: np.ndarray,
    assignment: np.ndarray,
    g_target: BipartiteGraph,
    g_cross: BipartiteGraph,
) -> ModelInputs:
    n_ti = bundle.n_target_items
    return ModelInputs(
        g_target=g_target,
        g_cross=g_cross,
        item_text=np.asarray(item_vectors[:n_ti], dtype=np.float64),
        cluster_text=np.asarray(cluster_vectors, dtype=np.float64),
        item_cluster=np.asarray(assignment[:n_ti], dtype=np.int64),
    )


def evaluate_params(params: Parameters, hp: HyperParams, inputs: ModelInputs, tasks: RankingTasks, ks) -> EvalReport:
    user_emb, item_emb = score_embeddings(params, hp, inputs)
    return rank_and_score(tasks, embedding_scorer(user_emb, item_emb), ks)


@dataclass
class TrainResult:
    params: Parameters
    best_epoch: int
    best_valid: float
    epochs_run: int
    stop_reason: str
    history: List[Dict] = field(default_factory=list)


class Trainer:
    """
    Mini-batch BPR training with Adam, per-epoch negative resampling and
    early stopping on validation HR@eval_k.

    Writes into `out_dir`:
      checkpoint.bin    best-validation state (parameters, Adam moments, RNG)
      last.bin          state after the latest epoch (resume point)
      train_log.jsonl   one line per epoch
    """

    def __init__(self, hp: HyperParams, out_dir: str, verbose: bool = True):
        self.hp = hp
        self.out_dir = out_dir
        self.verbose = verbose
        os.makedirs(out_dir, exist_ok=True)

    @property
    def checkpoint_path(self) -> str:
        return os.path.join(self.out_dir, CHECKPOINT_FILE)

    @property
    def last_path(self) -> str:
        return os.path.join(self.out_dir, LAST_FILE)

    @property
    def log_path(self) -> str:
        return os.path.join(self.out_dir, LOG_FILE)

    # --------------------------------------------------
    # Estado inicial / reanudación
    # --------------------------------------------------
    def _fresh_state(self, inputs: ModelInputs, dims: Dict[str, int]):
        rng = np.random.default_rng(self.hp.seed)
        params = init_parameters(self.hp, inputs.n_users, inputs.n_clusters, inputs.d_txt, rng)
        state = Checkpoint(
            params=params,
            hp=self.hp,
            adam=AdamState.zeros_like(params),
            rng_state=rng.bit_generator.state,
            dims=dims,
        )
        if os.path.exists(self.log_path):
            os.remove(self.log_path)
        return state, rng, self._snapshot(state)

    def _resumed_state(self):
        state = load_checkpoint(self.last_path)
        best = load_checkpoint(self.checkpoint_path) if os.path.exists(self.checkpoint_path) else self._snapshot(state)
        if self.verbose:
            print(f"[TRAIN] resuming after epoch {state.epoch} (best epoch {state.best_epoch})")
        return state, state.rng(), best

    # --------------------------------------------------
    # Bucle de entrenamiento
    # --------------------------------------------------
    def fit(self, bundle: DatasetBundle, inputs: ModelInputs, resume: bool = False) -> TrainResult:
        hp = self.hp
        dims = {
            "n_target_users": bundle.n_target_users,
            "n_target_items": bundle.n_target_items,
            "n_users": inputs.n_users,
            "n_clusters": inputs.n_clusters,
        }
        if resume and os.path.exists(self.last_path):
            state, rng, best = self._resumed_state()
        else:
            state, rng, best = self._fresh_state(inputs, dims)

        index = InteractionIndex(bundle.user_items, bundle.n_target_items)
        valid_tasks = build_tasks(
            bundle, "valid", np.random.default_rng(hp.seed + VALID_SEED_OFFSET), verbose=self.verbose
        )
        train_u, train_v = bundle.train.user, bundle.train.item
        n = train_u.size
        history: List[Dict] = []
        stop_reason = "max_epochs"

        for epoch in range(state.epoch + 1, hp.max_epochs + 1):
            perm = rng.permutation(n)
            users, items = train_u[perm], train_v[perm]
            negs = sample_negatives(users, index, rng)

            sums: Dict[str, float] = defaultdict(float)
            n_batches = 0
            zero_norm = 0
            params = state.params
            try:
                for b, start in enumerate(range(0, n, hp.batch_size)):
                    sl = slice(start, start + hp.batch_size)
                    batch = Batch(users=users[sl], items=items[sl], neg_items=negs[sl], index=b)
                    cache = forward(params, hp, inputs, batch)
                    grads = backward(batch, cache, params)
                    params = adam_step(params, grads, state.adam, hp.lr)
                    for name, value in cache.loss_values().items():
                        sums[name] += value
                    zero_norm += cache.zero_norm_pairs
                    n_batches += 1
                if not params.all_finite():
                    raise NumericError(f"parameters became non-finite in epoch {epoch}")
            except NumericError as e:
                save_checkpoint(self.checkpoint_path, best)
                raise NumericError(f"training diverged in epoch {epoch}: {e}; last good checkpoint: {self.checkpoint_path}") from e

            if zero_norm and self.verbose:
                print(f"[TRAIN] WARNING epoch {epoch}: {zero_norm} zero-norm cosine pairs in L_dr (similarity set to 0)")

            losses = {name: value / max(n_batches, 1) for name, value in sums.items()}
            report = evaluate_params(params, hp, inputs, valid_tasks, [hp.eval_k])
            hr, nd = report.hr[hp.eval_k], report.ndcg[hp.eval_k]

            improved = hr > state.best_valid
            state.params = params
            state.epoch = epoch
            state.rng_state = rng.bit_generator.state
            if improved:
                state.best_valid, state.best_epoch, state.bad_epochs = hr, epoch, 0
                best = self._snapshot(state)
            else:
                state.bad_epochs += 1

            valid = {f"valid_HR@{hp.eval_k}": hr, f"valid_NDCG@{hp.eval_k}": nd}
            history.append(log_epoch(self.log_path, epoch, losses, valid, improved))
            if improved:
                save_checkpoint(self.checkpoint_path, best)
            save_checkpoint(self.last_path, state)

            if self.verbose:
                print(
                    f"[TRAIN] epoch {epoch:3d} loss={losses.get('total', 0.0):.4f} "
                    f"bpr={losses.get('bpr', 0.0):.4f} HR@{hp.eval_k}={hr:.4f} NDCG@{hp.eval_k}={nd:.4f}"
                    + (" *" if improved else "")
                )

            if state.bad_epochs >= hp.patience:
                stop_reason = "patience"
                break

        if not os.path.exists(self.checkpoint_path):
            save_checkpoint(self.checkpoint_path, best)

        if self.verbose:
            print(f"[TRAIN] stopped ({stop_reason}); best epoch {state.best_epoch} HR@{hp.eval_k}={state.best_valid:.4f}")

        return TrainResult(
            params=best.params,
            best_epoch=state.best_epoch,
            best_valid=state.best_valid,
            epochs_run=state.epoch,
            stop_reason=stop_reason,
            history=history,
        )

    @staticmethod
    def _snapshot(state: Checkpoint) -> Checkpoint:
        """Parameters, Adam moments and RNG position frozen together."""
        return replace(
            state,
            params=state.params.copy(),
            adam=state.adam.copy(),
            rng_state=copy.deepcopy(state.rng_state),
            bad_epochs=0,
            dims=dict(state.dims),
        )


def train(
    bundle: DatasetBundle,
    inputs: ModelInputs,
    hp: HyperParams,
    out_dir: str,
    resume: bool = False,
    verbose: bool = True,
) -> TrainResult:
    return Trainer(hp, out_dir, verbose=verbose).fit(bundle, inputs, resume=resume)
