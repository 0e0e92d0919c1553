from dataclasses import dataclass
from typing import Dict

import numpy as np

from common.errors import DataError


@dataclass(frozen=True)
class TokenEmbeddingTable:
    """token -> D_txt vector. Read-only after load."""

    index: Dict[str, int]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.index[token]]

    @classmethod
    def from_dict(cls, table: Dict[str, np.ndarray]) -> "TokenEmbeddingTable":
        tokens = sorted(table)
        if not tokens:
            raise DataError("Token table is empty")
        vectors = np.vstack([np.asarray(table[t], dtype=np.float64) for t in tokens])
        vectors.setflags(write=False)
        return cls(index={t: i for i, t in enumerate(tokens)}, vectors=vectors)


def load_token_table(path: str) -> TokenEmbeddingTable:
    """
    Format: header line `D_txt`, then `token<TAB>f1 f2 ... fD` per line.
    """
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        try:
            dim = int(header)
        except ValueError:
            raise DataError(f"{path}:1: header must be the integer D_txt, got {header!r}") from None
        if dim <= 0:
            raise DataError(f"{path}:1: D_txt must be positive")

        index: Dict[str, int] = {}
        rows = []
        for line_no, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            token, sep, values = line.partition("\t")
            if not sep or not token:
                raise DataError(f"{path}:{line_no}: expected 'token<TAB>values'")
            try:
                vec = np.array(values.split(), dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-numeric vector entry") from None
            if vec.shape[0] != dim:
                raise DataError(
                    f"{path}:{line_no}: token {token!r} has {vec.shape[0]} values, expected {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{line_no}: token {token!r} has non-finite values")
            if token in index:
                raise DataError(f"{path}:{line_no}: duplicate token {token!r}")
            index[token] = len(rows)
            rows.append(vec)

    if not rows:
        raise DataError(f"{path}: token table has no entries")

    vectors = np.vstack(rows)
    vectors.setflags(write=False)
    print(f"[EMBEDDER] Token table loaded: {len(rows)} tokens, D_txt={dim}")
    return TokenEmbeddingTable(index=index, vectors=vectors)


def save_token_table(table: TokenEmbeddingTable, path: str) -> None:
    tokens = sorted(table.index, key=table.index.get)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{table.dim}\n")
        for t in tokens:
            values = " ".join(repr(float(x)) for x in table.vector(t))
            f.write(f"{t}\t{values}\n")
