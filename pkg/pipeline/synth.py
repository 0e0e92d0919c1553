"""
Synthetic two-domain dataset with planted semantic clusters.

Items of both domains are spread over the same clusters; each cluster owns a
small topic vocabulary whose token vectors sit around a cluster centre, so
item texts of one cluster land close together in the token space. Users follow
shared archetypes (one preferred cluster each); in every domain a user's
cluster preferences are the archetype row mixed with Dirichlet noise:

    p_u = normalize((1 - bias) * base[archetype(u)] + bias * noise_u)

bias = 0 gives identical source and target preference matrices.
"""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from common.errors import ConfigError, DataError
from embeddings.token_table import TokenEmbeddingTable, save_token_table
from ingestion.bundle import Domain
from ingestion.filtering import DENSITY_BOUNDS, FilterRole

ROLE = {Domain.SOURCE: FilterRole.SOURCE_DOMAIN, Domain.TARGET: FilterRole.TARGET_DOMAIN}
PREFIX = {Domain.SOURCE: "s", Domain.TARGET: "t"}
T0 = 1_600_000_000


@dataclass(frozen=True)
class SynthSpec:
    n_users: int = 200          # per domain
    n_items: int = 120          # per domain; >= 99 negatives + the longest history
    n_clusters: int = 10
    bias: float = 0.3
    seed: int = 0
    d_txt: int = 16
    peak: float = 0.7           # archetype mass on its own cluster
    topic_words: int = 8
    general_words: int = 20
    words_per_doc: int = 10
    centre_scale: float = 3.0
    word_noise: float = 0.3

    def validate(self) -> None:
        if self.n_clusters < 2:
            raise ConfigError("synthetic data needs at least 2 clusters")
        if self.n_users < 10:
            raise ConfigError("synthetic data needs at least 10 users per domain")
        if self.n_items < self.n_clusters:
            raise ConfigError("every cluster needs at least one item per domain")
        if not 0.0 <= self.bias <= 1.0:
            raise ConfigError(f"bias strength must be in [0, 1], got {self.bias}")
        for domain in Domain:
            u_min, u_max, i_min, i_max = DENSITY_BOUNDS[ROLE[domain]]
            if self.n_users * u_min > self.n_items * i_max or self.n_users * u_max < self.n_items * i_min:
                raise ConfigError(
                    f"{domain.value}: {self.n_users} users x [{u_min},{u_max}] interactions cannot cover "
                    f"{self.n_items} items x [{i_min},{i_max}]"
                )


@dataclass
class SynthData:
    spec: SynthSpec
    records: Dict[Domain, List[Tuple[str, str, int]]]
    texts: Dict[Domain, Dict[str, str]]
    item_cluster: Dict[Domain, np.ndarray]
    preferences: Dict[Domain, np.ndarray]       # users x clusters
    archetypes: np.ndarray
    table: TokenEmbeddingTable
    paths: Dict[str, str] = field(default_factory=dict)


# ------------------------------------------------------------
# Vocabulario y tabla de tokens
# ------------------------------------------------------------
def _topic_word(c: int, w: int) -> str:
    return f"c{c}w{w}"


def _general_word(w: int) -> str:
    return f"g{w}"


def _token_table(spec: SynthSpec, rng: np.random.Generator) -> TokenEmbeddingTable:
    centres = rng.normal(0.0, spec.centre_scale, size=(spec.n_clusters, spec.d_txt))
    table = {}
    for c in range(spec.n_clusters):
        for w in range(spec.topic_words):
            table[_topic_word(c, w)] = centres[c] + rng.normal(0.0, spec.word_noise, size=spec.d_txt)
    for w in range(spec.general_words):
        table[_general_word(w)] = rng.normal(0.0, spec.word_noise, size=spec.d_txt)
    return TokenEmbeddingTable.from_dict(table)


def _document(c: int, spec: SynthSpec, rng: np.random.Generator) -> str:
    n_topic = max(spec.words_per_doc - 2, 1)
    words = [_topic_word(c, int(w)) for w in rng.integers(0, spec.topic_words, size=n_topic)]
    words += [_general_word(int(w)) for w in rng.integers(0, spec.general_words, size=spec.words_per_doc - n_topic)]
    return " ".join(words)


# ------------------------------------------------------------
# Interacciones respetando los límites de densidad
# ------------------------------------------------------------
def _degrees(spec: SynthSpec, bounds, rng: np.random.Generator) -> np.ndarray:
    u_min, u_max, i_min, i_max = bounds
    deg = rng.integers(u_min, u_max + 1, size=spec.n_users)
    lo, hi = spec.n_items * i_min, spec.n_items * i_max
    while deg.sum() < lo:
        deg[rng.choice(np.flatnonzero(deg < u_max))] += 1
    while deg.sum() > hi:
        deg[rng.choice(np.flatnonzero(deg > u_min))] -= 1
    return deg


def _interactions(
    prefs: np.ndarray,
    item_cluster: np.ndarray,
    bounds,
    spec: SynthSpec,
    rng: np.random.Generator,
) -> List[List[int]]:
    u_min, u_max, i_min, i_max = bounds
    n_items = item_cluster.size
    cluster_size = np.bincount(item_cluster, minlength=spec.n_clusters).astype(np.float64)
    item_weight = prefs[:, item_cluster] / cluster_size[item_cluster]   # users x items

    counts = np.zeros(n_items, dtype=np.int64)
    held = np.zeros((spec.n_users, n_items), dtype=bool)
    histories: List[List[int]] = [[] for _ in range(spec.n_users)]

    def add(u: int, v: int) -> None:
        histories[u].append(v)
        held[u, v] = True
        counts[v] += 1

    def pick(u: int, allowed: np.ndarray) -> bool:
        w = np.where(allowed & ~held[u], item_weight[u], 0.0)
        if w.sum() <= 0:
            return False
        add(u, int(rng.choice(n_items, p=w / w.sum())))
        return True

    for u, d in enumerate(_degrees(spec, bounds, rng)):
        for _ in range(d):
            if not pick(u, counts < i_max):
                break

    # usuarios por debajo del mínimo
    for u in range(spec.n_users):
        while len(histories[u]) < u_min:
            if not pick(u, counts < i_max):
                raise DataError(f"synthetic generation: no item capacity left for user {u}")

    # ítems por debajo del mínimo
    for v in np.flatnonzero(counts < i_min):
        while counts[v] < i_min:
            free = np.flatnonzero((np.array([len(h) for h in histories]) < u_max) & ~held[:, v])
            if free.size == 0:
                raise DataError(f"synthetic generation: item {v} cannot reach {i_min} interactions")
            w = prefs[free, item_cluster[v]]
            add(int(rng.choice(free, p=w / w.sum())), int(v))

    return histories


# ------------------------------------------------------------
# API pública
# ------------------------------------------------------------
def gen_synth(spec: SynthSpec, verbose: bool = True) -> SynthData:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    table = _token_table(spec, rng)

    k = spec.n_clusters
    base = np.full((k, k), (1.0 - spec.peak) / k) + spec.peak * np.eye(k)
    archetypes = np.arange(spec.n_users) % k

    records, texts, clusters, preferences = {}, {}, {}, {}
    for domain in (Domain.SOURCE, Domain.TARGET):
        bounds = DENSITY_BOUNDS[ROLE[domain]]
        noise = rng.dirichlet(np.ones(k), size=spec.n_users)
        prefs = (1.0 - spec.bias) * base[archetypes] + spec.bias * noise
        prefs /= prefs.sum(axis=1, keepdims=True)

        item_cluster = np.arange(spec.n_items) % k
        p = PREFIX[domain]
        texts[domain] = {f"{p}i{v}": _document(int(item_cluster[v]), spec, rng) for v in range(spec.n_items)}

        rows = []
        for u, history in enumerate(_interactions(prefs, item_cluster, bounds, spec, rng)):
            ts = T0 + np.cumsum(rng.integers(1, 86_400, size=len(history)))
            rows += [(f"{p}u{u}", f"{p}i{v}", int(t)) for v, t in zip(history, ts)]

        records[domain], clusters[domain], preferences[domain] = rows, item_cluster, prefs
        if verbose:
            print(f"[SYNTH] {domain.value}: {spec.n_users} users, {spec.n_items} items, {len(rows)} interactions")

    return SynthData(
        spec=spec,
        records=records,
        texts=texts,
        item_cluster=clusters,
        preferences=preferences,
        archetypes=archetypes,
        table=table,
    )


def write_synth(data: SynthData, out_dir: str, workdir: str | None = None) -> Dict[str, str]:
    """Interaction / text TSVs, the token table and a ready-to-run config.toml."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for domain in (Domain.SOURCE, Domain.TARGET):
        name = domain.value
        paths[f"{name}_interactions"] = os.path.join(out_dir, f"{name}.tsv")
        paths[f"{name}_texts"] = os.path.join(out_dir, f"{name}_texts.tsv")
        with open(paths[f"{name}_interactions"], "w", encoding="utf-8") as f:
            for user, item, ts in data.records[domain]:
                f.write(f"{user}\t{item}\t{ts}\n")
        with open(paths[f"{name}_texts"], "w", encoding="utf-8") as f:
            for item, doc in data.texts[domain].items():
                f.write(f"{item}\t{doc}\n")

    paths["token_table"] = os.path.join(out_dir, "tokens.txt")
    save_token_table(data.table, paths["token_table"])

    paths["config"] = os.path.join(out_dir, "config.toml")
    workdir = workdir or os.path.join(out_dir, "work")
    with open(paths["config"], "w", encoding="utf-8") as f:
        f.write("[paths]\n")
        for key in ("source_interactions", "target_interactions", "source_texts", "target_texts", "token_table"):
            f.write(f'{key} = "{os.path.abspath(paths[key])}"\n')
        f.write(f'workdir = "{os.path.abspath(workdir)}"\n\n')
        f.write(f"[model]\nk = {data.spec.n_clusters}\n")

    data.paths = paths
    return paths
