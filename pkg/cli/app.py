import argparse
import json
import sys
from contextlib import nullcontext
from typing import Dict, List, Optional, Sequence

from threadpoolctl import threadpool_limits

from common.errors import EXIT_CODES, ConfigError, ScdgnError
from engine.trainer import train
from graphs.builders import load_graphs
from pipeline.config import RunConfig, config_fields, load_config, parse_ints, with_ablation
from pipeline.runner import (
    GRAPHS_FILE,
    cluster,
    evaluate,
    graphs,
    load_inputs,
    prepare,
    run_dir,
    run_pipeline,
    workdir_path,
)
from pipeline.stage_manager import StageManager
from pipeline.synth import SynthSpec, gen_synth, write_synth

# ==========================================================
# Secciones de configuración expuestas por cada subcomando
# ==========================================================
COMMAND_SECTIONS = {
    "prepare": ("paths", "run"),
    "cluster": ("paths", "model", "train", "run"),
    "graphs": ("paths", "run"),
    "train": ("paths", "model", "train", "run"),
    "evaluate": ("paths", "eval", "run"),
    "run": ("paths", "model", "train", "eval", "run"),
}


def add_config_arguments(parser: argparse.ArgumentParser, sections: Sequence[str], aliases: Dict[str, str] | None = None):
    """One flag per config field of the given sections (`field_name` -> `--field-name`)."""
    aliases = aliases or {}
    for section in sections:
        group = parser.add_argument_group(f"[{section}]")
        for cf in config_fields():
            if cf.section != section:
                continue
            names = [cf.flag] + ([aliases[cf.name]] if cf.name in aliases else [])
            default_text = ",".join(map(str, cf.default)) if cf.kind == "ints" else cf.default
            kwargs = {"dest": cf.dest, "default": None, "help": f"{cf.help} (default: {default_text})"}
            if cf.kind is bool:
                kwargs["action"] = argparse.BooleanOptionalAction
            elif cf.kind == "ints":
                kwargs["type"] = parse_ints
                kwargs["metavar"] = "N,N,..."
            else:
                kwargs["type"] = cf.kind
                if cf.choices:
                    kwargs["choices"] = cf.choices
            group.add_argument(*names, **kwargs)


def overrides_from(args: argparse.Namespace) -> Dict[str, object]:
    return {
        cf.name: getattr(args, cf.dest)
        for cf in config_fields()
        if getattr(args, cf.dest, None) is not None
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scdgn",
        description="Cross-domain recommendation over a semantic user-cluster graph with debiasing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str, aliases: Dict[str, str] | None = None) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML run configuration; flags override its values")
        add_config_arguments(p, COMMAND_SECTIONS[name], aliases)
        return p

    command("prepare", "read, density-filter and split the interactions into bundle.bin")
    command("cluster", "semantic item vectors and k-means clusters into clusters.bin")

    p = command("graphs", "build G_target / G_cross, or print their statistics")
    p.add_argument("action", nargs="?", choices=("build", "stats"), default="build")

    p = command("train", "train one model (variant --ablation, seed --seed)")
    p.add_argument("--out", help="output directory (default: <workdir>/train/<variant>/seed<N>)")

    p = command("evaluate", "sampled leave-one-out ranking report", aliases={"k_list": "--k"})
    p.add_argument("--checkpoint", help="evaluate this checkpoint only")
    p.add_argument("--bundle", help="bundle.bin to evaluate against (default: <workdir>/bundle.bin)")

    command("run", "prepare -> cluster -> graphs -> train -> evaluate")

    p = sub.add_parser("synth", help="generate a synthetic two-domain dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--users", type=int, default=SynthSpec.n_users, help="users per domain")
    p.add_argument("--items", type=int, default=SynthSpec.n_items, help="items per domain")
    p.add_argument("--clusters", type=int, default=SynthSpec.n_clusters, help="planted clusters")
    p.add_argument("--bias", type=float, default=SynthSpec.bias, help="domain-bias strength in [0, 1]")
    p.add_argument("--seed", type=int, default=SynthSpec.seed, help="random seed")
    p.add_argument("--d-txt", type=int, default=SynthSpec.d_txt, help="token vector dimension")
    p.add_argument("--verbose", action=argparse.BooleanOptionalAction, default=True, help="console progress lines")
    return parser


# ==========================================================
# Ejecución de subcomandos
# ==========================================================
def _finish(outcome: Dict) -> int:
    if outcome["ok"]:
        return EXIT_CODES["ok"]
    print(f"[PIPELINE] {outcome['stage']} failed ({outcome['error_type']}): {outcome['message']}", file=sys.stderr)
    return EXIT_CODES.get(outcome["error_type"], 1)


def _single_stage(name: str, func, config: RunConfig, required: Sequence[str] = (), **extra) -> int:
    try:
        config.require(*required)
    except ConfigError as e:
        return _finish({"ok": False, "stage": name, "error_type": e.error_type, "message": str(e)})
    manager = StageManager(debug=False)
    manager.register(name, func, required_keys=["config"])
    outcome = manager.execute(name, {"config": config, **extra})
    if outcome["ok"] and isinstance(outcome["result"], dict) and config.run.verbose:
        print(json.dumps(outcome["result"], indent=2, sort_keys=True, default=str))
    return _finish(outcome)


def _graph_stats(config: RunConfig) -> Dict:
    g_target, g_cross = load_graphs(workdir_path(config, GRAPHS_FILE))
    return {"target": g_target.stats(), "cross": g_cross.stats()}


def _train_one(config: RunConfig, out: Optional[str] = None) -> Dict:
    config = with_ablation(config, config.run.ablation)
    bundle, inputs = load_inputs(config)
    out_dir = out or run_dir(config, config.run.ablation, config.hp.seed)
    result = train(bundle, inputs, config.hp, out_dir, resume=config.run.resume, verbose=config.run.verbose)
    return {
        "out": out_dir,
        "best_epoch": result.best_epoch,
        "best_valid": result.best_valid,
        "epochs_run": result.epochs_run,
        "stop_reason": result.stop_reason,
    }


def _evaluate(config: RunConfig, checkpoint: Optional[str] = None, bundle: Optional[str] = None) -> Dict:
    rows = evaluate(config, checkpoint=checkpoint, bundle_path=bundle)
    return {name: rep.to_dict() for name, rep in rows.items()}


def _synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        n_users=args.users,
        n_items=args.items,
        n_clusters=args.clusters,
        bias=args.bias,
        seed=args.seed,
        d_txt=args.d_txt,
    )
    try:
        paths = write_synth(gen_synth(spec, verbose=args.verbose), args.out)
    except ScdgnError as e:
        return _finish({"ok": False, "stage": "synth", "error_type": e.error_type, "message": str(e)})
    if args.verbose:
        print(f"[SYNTH] files written to {args.out}; run with: scdgn run --config {paths['config']}")
    return EXIT_CODES["ok"]


def dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    if args.command == "prepare":
        return _single_stage("prepare", prepare, config,
                             ("source_interactions", "target_interactions", "source_texts", "target_texts"))
    if args.command == "cluster":
        return _single_stage("cluster", cluster, config, ("token_table",))
    if args.command == "graphs":
        return _single_stage("graphs", _graph_stats if args.action == "stats" else graphs, config)
    if args.command == "train":
        return _single_stage("train", _train_one, config, out=args.out)
    if args.command == "evaluate":
        return _single_stage("evaluate", _evaluate, config, checkpoint=args.checkpoint, bundle=args.bundle)
    if args.command == "run":
        code, _ = run_pipeline(config)
        return code
    raise ConfigError(f"unknown command {args.command!r}")


def run_cli(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synth":
        return _synth(args)

    try:
        config = load_config(args.config, overrides_from(args))
    except ConfigError as e:
        print(f"[CONFIG] {e}", file=sys.stderr)
        return e.exit_code

    limits = threadpool_limits(limits=config.run.threads) if config.run.threads else nullcontext()
    with limits:
        return dispatch(args, config)
