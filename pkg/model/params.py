from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Dict, Iterator, Tuple

import numpy as np

from common.errors import ConfigError

GROUPS = ("E_u", "W", "b", "A_u", "A_c")
DEBIAS_GROUPS = ("A_u", "A_c")


class Ablation(str, Enum):
    NONE = "none"
    NO_SI = "no-si"            # no cross-domain user-cluster graph (LightGCN with text)
    NO_DRLOSS = "no-drloss"    # no dimension-reduction loss
    NO_DB = "no-db"            # plain conv on G_cross, no restriction losses


def _hp(default, help_text: str, **extra):
    return field(default=default, metadata={"help": help_text, **extra})


@dataclass(frozen=True)
class HyperParams:
    d: int = _hp(32, "embedding dimension of e_u / e_v / e_c")
    d_a: int = _hp(32, "debias vector dimension (must equal d)")
    P: int = _hp(2, "debiasing graph conv layers on G_cross")
    Q: int = _hp(3, "graph conv layers on G_target")
    lambda1: float = _hp(0.01, "restriction loss weight")
    lambda2: float = _hp(1.0, "dimension-reduction loss weight")
    lambda3: float = _hp(0.01, "L2 weight on all trainable parameters")
    lr: float = _hp(0.01, "Adam learning rate")
    batch_size: int = _hp(1024, "mini-batch size")
    k: int = _hp(200, "number of semantic item clusters")
    seed: int = _hp(0, "random seed")
    no_cross_graph: bool = _hp(False, "ablation: drop the G_cross paths")
    no_dr_loss: bool = _hp(False, "ablation: drop the dimension-reduction loss")
    no_debias: bool = _hp(False, "ablation: plain conv on G_cross, no restriction loss")
    dedup_layer0: bool = _hp(False, "count e_u once in the final user embedding")
    debias_init: str = _hp("normal", "init of a_u / a_c: normal | ones", choices=("normal", "ones"))
    init_std: float = _hp(0.1, "std of the normal initializers")
    max_epochs: int = _hp(200, "maximum training epochs")
    patience: int = _hp(20, "epochs without validation improvement before stopping")
    eval_k: int = _hp(5, "cutoff of the per-epoch validation HR/NDCG")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.P < 0 or self.Q < 0:
            raise ConfigError(f"layer counts must be >= 0 (P={self.P}, Q={self.Q})")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.d <= 0 or self.d_a <= 0:
            raise ConfigError("d and d_a must be positive")
        if self.uses_restriction and self.d_a != self.d:
            raise ConfigError(
                f"d_a={self.d_a} must equal d={self.d} when restriction losses are enabled"
            )
        if self.debias_init not in ("normal", "ones"):
            raise ConfigError(f"debias_init must be 'normal' or 'ones', got {self.debias_init!r}")
        if self.batch_size <= 0 or self.lr < 0:
            raise ConfigError("batch_size must be positive and lr non-negative")
        if self.k < 2:
            raise ConfigError("k must be >= 2")

    # --------------------------------------------------
    # Banderas derivadas
    # --------------------------------------------------
    @property
    def uses_cross_graph(self) -> bool:
        return not self.no_cross_graph

    @property
    def uses_debias(self) -> bool:
        return self.uses_cross_graph and not self.no_debias

    @property
    def uses_restriction(self) -> bool:
        return self.uses_debias and self.lambda1 > 0

    @property
    def uses_dr(self) -> bool:
        return not self.no_dr_loss and self.lambda2 > 0

    def active_groups(self) -> Tuple[str, ...]:
        if self.uses_debias:
            return GROUPS
        return tuple(g for g in GROUPS if g not in DEBIAS_GROUPS)

    def with_ablation(self, ablation: "Ablation | str") -> "HyperParams":
        ablation = Ablation(ablation)
        if ablation is Ablation.NO_SI:
            return replace(self, no_cross_graph=True)
        if ablation is Ablation.NO_DRLOSS:
            return replace(self, no_dr_loss=True)
        if ablation is Ablation.NO_DB:
            return replace(self, no_debias=True)
        return self

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Parameters:
    """Trainable arrays: e_u, reduction layer (W, b), debias vectors a_u / a_c."""

    E_u: np.ndarray
    W: np.ndarray
    b: np.ndarray
    A_u: np.ndarray
    A_c: np.ndarray

    def groups(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in GROUPS:
            yield name, getattr(self, name)

    def copy(self) -> "Parameters":
        return Parameters(**{name: arr.copy() for name, arr in self.groups()})

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.groups())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for _, arr in self.groups())

    def squared_norm(self, groups: Tuple[str, ...] = GROUPS) -> float:
        return float(sum(np.sum(getattr(self, g) ** 2) for g in groups))


@dataclass
class Gradients:
    """Same shapes as Parameters; zero arrays for groups excluded by ablation."""

    E_u: np.ndarray
    W: np.ndarray
    b: np.ndarray
    A_u: np.ndarray
    A_c: np.ndarray

    def groups(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in GROUPS:
            yield name, getattr(self, name)

    @classmethod
    def zeros_like(cls, params: Parameters) -> "Gradients":
        return cls(**{name: np.zeros_like(arr) for name, arr in params.groups()})


def init_parameters(
    hp: HyperParams,
    n_users: int,
    n_clusters: int,
    d_txt: int,
    rng: np.random.Generator,
) -> Parameters:
    """
    E_u, A_u, A_c ~ N(0, init_std^2); W Xavier-uniform; b = 0.
    debias_init='ones' sets every debias entry to 1/sqrt(d_a), so a_uc = 1.
    """
    E_u = rng.normal(0.0, hp.init_std, size=(n_users, hp.d))

    bound = np.sqrt(6.0 / (hp.d + d_txt))
    W = rng.uniform(-bound, bound, size=(hp.d, d_txt))
    b = np.zeros(hp.d)

    if hp.debias_init == "ones":
        value = 1.0 / np.sqrt(hp.d_a)
        A_u = np.full((n_users, hp.d_a), value)
        A_c = np.full((n_clusters, hp.d_a), value)
    else:
        A_u = rng.normal(0.0, hp.init_std, size=(n_users, hp.d_a))
        A_c = rng.normal(0.0, hp.init_std, size=(n_clusters, hp.d_a))

    return Parameters(E_u=E_u, W=W, b=b, A_u=A_u, A_c=A_c)
