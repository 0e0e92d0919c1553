"""
Run configuration: a TOML file with one section per concern, overridden by
command-line flags. Every dataclass field below maps to exactly one flag
(`field_name` -> `--field-name`) and one `[section] field_name` key.
"""

import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Iterator, List, Optional, Tuple, get_args, get_origin, get_type_hints

from dotenv import load_dotenv

from common.errors import ConfigError, ScdgnError
from model.params import Ablation, HyperParams

load_dotenv()

ENV_WORKDIR = "SCDGN_WORKDIR"
ENV_THREADS = "SCDGN_THREADS"
DEFAULT_WORKDIR = "runs"

TRAIN_FIELDS = ("lr", "batch_size", "max_epochs", "patience", "eval_k", "seed")


def _meta(default, help_text: str, **extra):
    return field(default=default, metadata={"help": help_text, **extra})


@dataclass(frozen=True)
class PathsConfig:
    source_interactions: Optional[str] = _meta(None, "source-domain interactions TSV (user, item, timestamp)")
    target_interactions: Optional[str] = _meta(None, "target-domain interactions TSV (user, item, timestamp)")
    source_texts: Optional[str] = _meta(None, "source item texts TSV (item, document)")
    target_texts: Optional[str] = _meta(None, "target item texts TSV (item, document)")
    token_table: Optional[str] = _meta(None, "token embedding table (header D_txt, then token + vector)")
    workdir: str = _meta(DEFAULT_WORKDIR, f"artifact directory (default ${ENV_WORKDIR} or '{DEFAULT_WORKDIR}')")


@dataclass(frozen=True)
class EvalConfig:
    k_list: Tuple[int, ...] = _meta((1, 5, 10), "ranking cutoffs, comma separated")
    seeds: Tuple[int, ...] = _meta((0,), "training seeds for the confidence intervals, comma separated")
    split: str = _meta("test", "split to rank: valid | test", choices=("valid", "test"))
    n_negatives: int = _meta(99, "sampled negatives per ranking task")


@dataclass(frozen=True)
class RunOptions:
    ablation: str = _meta("none", "model variant", choices=tuple(a.value for a in Ablation))
    ablation_suite: bool = _meta(False, "train and compare full / no-si / no-drloss / no-db")
    resume: bool = _meta(False, "skip stages whose artifact already exists")
    swap_domains: bool = _meta(False, "exchange source and target inputs")
    threads: Optional[int] = _meta(None, f"cap on BLAS worker threads (default ${ENV_THREADS})")
    verbose: bool = _meta(True, "console progress lines")


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    hp: HyperParams = field(default_factory=HyperParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunOptions = field(default_factory=RunOptions)

    def require(self, *names: str) -> None:
        """Referenced input paths must be set and exist."""
        for name in names:
            value = getattr(self.paths, name)
            if not value:
                raise ConfigError(f"[paths] {name} is required for this command")
            if not os.path.exists(value):
                raise ConfigError(f"[paths] {name}: file not found: {value}")

    def summary(self) -> Dict[str, Any]:
        return {
            "paths": {f.name: getattr(self.paths, f.name) for f in fields(self.paths)},
            "hp": self.hp.to_dict(),
            "eval": {f.name: getattr(self.eval, f.name) for f in fields(self.eval)},
            "run": {f.name: getattr(self.run, f.name) for f in fields(self.run)},
        }


# ------------------------------------------------------------
# Catálogo de campos (sección TOML <-> flag)
# ------------------------------------------------------------
@dataclass(frozen=True)
class ConfigField:
    section: str
    name: str
    kind: Any            # int | float | bool | str | "ints"
    default: Any
    optional: bool
    help: str
    choices: Optional[Tuple[str, ...]] = None
    target: str = ""     # RunConfig attribute holding the field

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    @property
    def dest(self) -> str:
        return f"cfg_{self.target}_{self.name}"


def _kind_of(tp) -> Tuple[Any, bool]:
    args = get_args(tp)
    if type(None) in args:
        inner = next(a for a in args if a is not type(None))
        return _kind_of(inner)[0], True
    if get_origin(tp) is tuple:
        return "ints", False
    return tp, False


def _fields_of(cls, target: str, section_of) -> Iterator[ConfigField]:
    hints = get_type_hints(cls)
    for f in fields(cls):
        kind, optional = _kind_of(hints[f.name])
        yield ConfigField(
            section=section_of(f.name),
            name=f.name,
            kind=kind,
            default=f.default,
            optional=optional,
            help=f.metadata.get("help", ""),
            choices=f.metadata.get("choices"),
            target=target,
        )


def config_fields() -> List[ConfigField]:
    out: List[ConfigField] = []
    out += _fields_of(PathsConfig, "paths", lambda _: "paths")
    out += _fields_of(HyperParams, "hp", lambda n: "train" if n in TRAIN_FIELDS else "model")
    out += _fields_of(EvalConfig, "eval", lambda _: "eval")
    out += _fields_of(RunOptions, "run", lambda _: "run")
    return out


def parse_ints(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError as e:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from e


def _coerce(cf: ConfigField, value: Any) -> Any:
    where = f"[{cf.section}] {cf.name}"
    if value is None:
        if cf.optional:
            return None
        raise ConfigError(f"{where} cannot be empty")
    if cf.kind == "ints":
        if isinstance(value, str):
            return parse_ints(value)
        if isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            return tuple(value)
        raise ConfigError(f"{where} must be a list of integers, got {value!r}")
    if cf.kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if cf.kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if cf.kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where} must be a string, got {value!r}")
    if cf.choices and value not in cf.choices:
        raise ConfigError(f"{where} must be one of {list(cf.choices)}, got {value!r}")
    return value


# ------------------------------------------------------------
# Carga
# ------------------------------------------------------------
def read_toml(path: str) -> Dict[str, Dict[str, Any]]:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        # message carries "(at line X, column Y)"
        raise ConfigError(f"{path}: {e}") from e

    catalog = {(cf.section, cf.name) for cf in config_fields()}
    sections = {cf.section for cf in config_fields()}
    for section, body in data.items():
        if section not in sections or not isinstance(body, dict):
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in body:
            if (section, key) not in catalog:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
    return data


def build_config(file_values: Dict[str, Dict[str, Any]] | None = None, overrides: Dict[str, Any] | None = None) -> RunConfig:
    """
    Defaults <- environment <- TOML values <- flag overrides.
    `overrides` is keyed by field name (the flag without dashes).
    """
    file_values = file_values or {}
    overrides = overrides or {}

    values: Dict[str, Dict[str, Any]] = {"paths": {}, "hp": {}, "eval": {}, "run": {}}
    env_workdir = os.environ.get(ENV_WORKDIR)
    if env_workdir:
        values["paths"]["workdir"] = env_workdir
    env_threads = os.environ.get(ENV_THREADS)
    if env_threads:
        try:
            values["run"]["threads"] = int(env_threads)
        except ValueError as e:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {env_threads!r}") from e

    for cf in config_fields():
        section = file_values.get(cf.section, {})
        if cf.name in section:
            values[cf.target][cf.name] = _coerce(cf, section[cf.name])
        if overrides.get(cf.name) is not None:
            values[cf.target][cf.name] = _coerce(cf, overrides[cf.name])

    try:
        config = RunConfig(
            paths=PathsConfig(**values["paths"]),
            hp=HyperParams(**values["hp"]),
            eval=EvalConfig(**values["eval"]),
            run=RunOptions(**values["run"]),
        )
    except ScdgnError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e

    if not config.eval.k_list or min(config.eval.k_list) < 1:
        raise ConfigError("[eval] k_list needs positive cutoffs")
    if not config.eval.seeds:
        raise ConfigError("[eval] seeds needs at least one seed")
    if config.run.threads is not None and config.run.threads < 1:
        raise ConfigError("[run] threads must be >= 1")
    return config


def load_config(path: str | None = None, overrides: Dict[str, Any] | None = None) -> RunConfig:
    return build_config(read_toml(path) if path else None, overrides)


def with_ablation(config: RunConfig, ablation: str) -> RunConfig:
    return replace(config, hp=config.hp.with_ablation(ablation), run=replace(config.run, ablation=ablation))
