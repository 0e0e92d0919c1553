import json
import os
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from common.errors import ConfigError, DataError, EXIT_CODES
from embeddings.clustering import KMeansClusterer, cluster_semantic_embeddings, load_clusters, save_clusters
from embeddings.embedder import SemanticEmbedder
from embeddings.tfidf import fit_tfidf
from embeddings.token_table import load_token_table
from engine.checkpoint import check_compatible, load_checkpoint
from engine.trainer import model_inputs, train
from evaluation.aggregate import aggregate_runs, format_table
from evaluation.metrics import EvalReport, embedding_scorer, rank_and_score
from evaluation.tasks import build_tasks
from evaluation.utils_logging import log_evaluation
from graphs.builders import build_graphs, load_graphs, save_graphs
from ingestion.bundle import DatasetBundle, Domain, RawInteraction, load_bundle, save_bundle
from ingestion.filtering import FilterRole, density_filter, drop_short_histories
from ingestion.loader import ingest, read_corpus, read_interactions, read_texts, write_corpus
from ingestion.splitter import split_leave_one_out
from model.forward import ModelInputs, score_embeddings
from model.params import Ablation
from pipeline.config import RunConfig, with_ablation
from pipeline.stage_manager import StageManager

BUNDLE_FILE = "bundle.bin"
CORPUS_FILE = "corpus.txt"
STATS_FILE = "stats.json"
CLUSTERS_FILE = "clusters.bin"
GRAPHS_FILE = "graphs.bin"
RESULT_FILE = "result.json"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
AUDIT_LOG = os.path.join("logs", "evaluations.jsonl")

# ranking tasks use their own stream, shared by every variant and seed
TASK_SEED_OFFSET = 104729

VARIANT_NAMES = {
    Ablation.NONE: "full",
    Ablation.NO_SI: "no-si",
    Ablation.NO_DRLOSS: "no-drloss",
    Ablation.NO_DB: "no-db",
}
SUITE = (Ablation.NONE, Ablation.NO_SI, Ablation.NO_DRLOSS, Ablation.NO_DB)
SUITE_BASELINE = VARIANT_NAMES[Ablation.NO_SI]

STAGE_INPUTS = {
    "prepare": ("source_interactions", "target_interactions", "source_texts", "target_texts"),
    "cluster": ("token_table",),
    "graphs": (),
    "train": (),
    "evaluate": (),
}


def workdir_path(config: RunConfig, name: str) -> str:
    return os.path.join(config.paths.workdir, name)


def run_dir(config: RunConfig, ablation: Ablation, seed: int) -> str:
    return os.path.join(config.paths.workdir, "train", VARIANT_NAMES[Ablation(ablation)], f"seed{seed}")


def _write_json(path: str, data) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


# ------------------------------------------------------------
# 1. prepare: lectura, filtrado de densidad, partición
# ------------------------------------------------------------
def _as_domain(records: List[RawInteraction], domain: Domain) -> List[RawInteraction]:
    return [replace(r, domain=domain) for r in records]


def prepare(config: RunConfig) -> Dict:
    paths, verbose = config.paths, config.run.verbose
    os.makedirs(paths.workdir, exist_ok=True)

    source = read_interactions(paths.source_interactions, Domain.SOURCE, verbose=verbose)
    target = read_interactions(paths.target_interactions, Domain.TARGET, verbose=verbose)
    texts = {Domain.SOURCE: read_texts(paths.source_texts), Domain.TARGET: read_texts(paths.target_texts)}

    if config.run.swap_domains:
        source, target = _as_domain(target, Domain.SOURCE), _as_domain(source, Domain.TARGET)
        texts = {Domain.SOURCE: texts[Domain.TARGET], Domain.TARGET: texts[Domain.SOURCE]}
        if verbose:
            print("[PIPELINE] domains swapped: source <-> target")

    corpus = ingest(source + target, texts, verbose=verbose)
    kept_source = density_filter(corpus.records[Domain.SOURCE], FilterRole.SOURCE_DOMAIN, verbose=verbose)
    kept_target = density_filter(corpus.records[Domain.TARGET], FilterRole.TARGET_DOMAIN, verbose=verbose)
    kept_target = drop_short_histories(kept_target, verbose=verbose)

    bundle = split_leave_one_out(kept_target, kept_source, verbose=verbose)

    n_ti = bundle.n_target_items
    documents = [
        corpus.documents[Domain.TARGET if i < n_ti else Domain.SOURCE][key]
        for i, key in enumerate(bundle.item_keys)
    ]
    write_corpus(workdir_path(config, CORPUS_FILE), documents)

    stats = bundle.stats()
    bundle = replace(bundle, meta={"swap_domains": config.run.swap_domains})
    save_bundle(bundle, workdir_path(config, BUNDLE_FILE))
    _write_json(workdir_path(config, STATS_FILE), stats)

    if verbose:
        for side in ("source", "target"):
            s = stats[side]
            print(
                f"[PIPELINE] {side}: {s['users']} users, {s['items']} items, "
                f"{s['interactions']} interactions, {s['int_per_user']} int./user"
            )
    return stats


# ------------------------------------------------------------
# 2. cluster: vectores semánticos + k-means
# ------------------------------------------------------------
def cluster(config: RunConfig) -> Dict:
    verbose = config.run.verbose
    documents = read_corpus(workdir_path(config, CORPUS_FILE))
    table = load_token_table(config.paths.token_table)

    tfidf = fit_tfidf(documents, verbose=verbose)
    embedder = SemanticEmbedder(table, verbose=verbose)
    item_vectors = embedder.embed_corpus(documents, tfidf)

    model = KMeansClusterer(verbose=verbose).fit(item_vectors, k=config.hp.k, seed=config.hp.seed)
    cluster_vectors = cluster_semantic_embeddings(model, item_vectors)
    save_clusters(
        workdir_path(config, CLUSTERS_FILE), model, item_vectors, cluster_vectors, embedder.oov_items, config.hp.seed
    )

    bundle = load_bundle(workdir_path(config, BUNDLE_FILE)).with_clusters(model.assignment)
    save_bundle(bundle, workdir_path(config, BUNDLE_FILE))

    return {
        "k": model.k,
        "inertia": model.inertia,
        "iterations": model.n_iter,
        "converged": model.converged,
        "oov_items": int(np.sum(embedder.oov_items)),
    }


# ------------------------------------------------------------
# 3. graphs
# ------------------------------------------------------------
def graphs(config: RunConfig) -> Dict:
    bundle = load_bundle(workdir_path(config, BUNDLE_FILE))
    model, _, _, _ = load_clusters(workdir_path(config, CLUSTERS_FILE))
    g_target, g_cross = build_graphs(bundle, model.assignment, model.k, verbose=config.run.verbose)
    save_graphs(workdir_path(config, GRAPHS_FILE), g_target, g_cross)
    return {"target": g_target.stats(), "cross": g_cross.stats()}


def load_inputs(config: RunConfig, bundle: Optional[DatasetBundle] = None) -> Tuple[DatasetBundle, ModelInputs]:
    bundle = bundle or load_bundle(workdir_path(config, BUNDLE_FILE))
    model, item_vectors, cluster_vectors, _ = load_clusters(workdir_path(config, CLUSTERS_FILE))
    g_target, g_cross = load_graphs(workdir_path(config, GRAPHS_FILE))
    if g_cross.left_count != bundle.n_users or g_target.right_count != bundle.n_target_items:
        raise DataError("graphs.bin does not match bundle.bin; rebuild the graphs")
    return bundle, model_inputs(bundle, item_vectors, cluster_vectors, model.assignment, g_target, g_cross)


# ------------------------------------------------------------
# 4. train (una ejecución por variante y semilla)
# ------------------------------------------------------------
def variants(config: RunConfig) -> Tuple[Ablation, ...]:
    return SUITE if config.run.ablation_suite else (Ablation(config.run.ablation),)


def train_runs(config: RunConfig) -> Dict:
    bundle, inputs = load_inputs(config)
    results = {}
    for ablation in variants(config):
        for seed in config.eval.seeds:
            out_dir = run_dir(config, ablation, seed)
            label = f"{VARIANT_NAMES[ablation]}/seed{seed}"
            if config.run.resume and os.path.exists(os.path.join(out_dir, RESULT_FILE)):
                if config.run.verbose:
                    print(f"[PIPELINE] {label}: trained already, skipped")
                continue
            hp = replace(config.hp.with_ablation(ablation), seed=seed)
            if config.run.verbose:
                print(f"[PIPELINE] training {label}")
            result = train(bundle, inputs, hp, out_dir, resume=config.run.resume, verbose=config.run.verbose)
            summary = {
                "best_epoch": result.best_epoch,
                "best_valid": result.best_valid,
                "epochs_run": result.epochs_run,
                "stop_reason": result.stop_reason,
            }
            _write_json(os.path.join(out_dir, RESULT_FILE), summary)
            results[label] = summary
    return results


# ------------------------------------------------------------
# 5. evaluate
# ------------------------------------------------------------
def evaluate_checkpoint(
    checkpoint_path: str,
    bundle: DatasetBundle,
    inputs: ModelInputs,
    tasks,
    ks,
) -> EvalReport:
    ckpt = load_checkpoint(checkpoint_path)
    check_compatible(ckpt, bundle.n_target_users, bundle.n_target_items, inputs.n_users, inputs.n_clusters)
    user_emb, item_emb = score_embeddings(ckpt.params, ckpt.hp, inputs)
    return rank_and_score(tasks, embedding_scorer(user_emb, item_emb), ks)


def evaluate(config: RunConfig, checkpoint: Optional[str] = None, bundle_path: Optional[str] = None) -> Dict[str, EvalReport]:
    verbose = config.run.verbose
    bundle = load_bundle(bundle_path) if bundle_path else None
    bundle, inputs = load_inputs(config, bundle)
    rng = np.random.default_rng(config.hp.seed + TASK_SEED_OFFSET)
    tasks = build_tasks(bundle, config.eval.split, rng, n_negatives=config.eval.n_negatives, verbose=verbose)
    ks = config.eval.k_list

    rows: Dict[str, EvalReport] = {}
    if checkpoint:
        rows[os.path.basename(checkpoint)] = evaluate_checkpoint(checkpoint, bundle, inputs, tasks, ks)
    else:
        for ablation in variants(config):
            per_seed = []
            for seed in config.eval.seeds:
                path = os.path.join(run_dir(config, ablation, seed), "checkpoint.bin")
                if not os.path.exists(path):
                    raise DataError(f"no checkpoint for {VARIANT_NAMES[ablation]} seed {seed}: {path}")
                per_seed.append(evaluate_checkpoint(path, bundle, inputs, tasks, ks))
            rows[VARIANT_NAMES[ablation]] = aggregate_runs(per_seed)

    baseline = SUITE_BASELINE if config.run.ablation_suite else None
    table = format_table(rows, baseline=baseline)
    _write_json(workdir_path(config, REPORT_JSON), {name: rep.to_dict() for name, rep in rows.items()})
    with open(workdir_path(config, REPORT_TXT), "w", encoding="utf-8") as f:
        f.write(table)

    for name, rep in rows.items():
        log_evaluation(
            rep,
            {"variant": name, "split": config.eval.split, "seeds": list(config.eval.seeds), "checkpoint": checkpoint},
            output_path=workdir_path(config, AUDIT_LOG),
        )
    if verbose:
        print(f"[EVAL] {config.eval.split} split, {len(tasks)} tasks\n{table}", end="")
    return rows


# ------------------------------------------------------------
# Orquestación
# ------------------------------------------------------------
def build_stage_manager(config: RunConfig) -> StageManager:
    manager = StageManager(debug=config.run.verbose)
    manager.register("prepare", prepare, artifact=workdir_path(config, BUNDLE_FILE), required_keys=["config"],
                     description="read, filter and split interactions")
    manager.register("cluster", cluster, artifact=workdir_path(config, CLUSTERS_FILE), required_keys=["config"],
                     description="semantic item vectors and k-means clusters")
    manager.register("graphs", graphs, artifact=workdir_path(config, GRAPHS_FILE), required_keys=["config"],
                     description="G_target and G_cross")
    manager.register("train", train_runs, required_keys=["config"],
                     description="one training run per variant and seed")
    manager.register("evaluate", evaluate, required_keys=["config"],
                     description="sampled leave-one-out ranking report")
    return manager


def _train_done(config: RunConfig) -> bool:
    return all(
        os.path.exists(os.path.join(run_dir(config, a, s), RESULT_FILE))
        for a in variants(config)
        for s in config.eval.seeds
    )


def run_pipeline(config: RunConfig) -> Tuple[int, List[Dict]]:
    """
    prepare -> cluster -> graphs -> train -> evaluate. With `resume`, a stage
    whose artifact exists is skipped. Returns the exit code and the stage results.
    """
    config = with_ablation(config, config.run.ablation) if not config.run.ablation_suite else config
    manager = build_stage_manager(config)
    outcomes: List[Dict] = []

    for name in ("prepare", "cluster", "graphs", "train", "evaluate"):
        artifact = manager.artifact(name)
        done = (artifact is not None and os.path.exists(artifact)) or (name == "train" and _train_done(config))
        if config.run.resume and done and name != "evaluate":
            if config.run.verbose:
                print(f"[PIPELINE] {name}: artifact present, skipped")
            outcomes.append({"ok": True, "stage": name, "skipped": True})
            continue

        try:
            config.require(*STAGE_INPUTS[name])
        except ConfigError as e:
            outcomes.append({"ok": False, "stage": name, "error_type": e.error_type, "message": str(e)})
            break

        outcome = manager.execute(name, {"config": config})
        outcomes.append(outcome)
        if not outcome["ok"]:
            break

    last = outcomes[-1]
    if not last["ok"]:
        print(f"[PIPELINE] stage '{last['stage']}' failed ({last['error_type']}): {last['message']}")
        return EXIT_CODES.get(last["error_type"], 1), outcomes
    return EXIT_CODES["ok"], outcomes
