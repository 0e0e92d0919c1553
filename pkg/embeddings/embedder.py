import numpy as np

from embeddings.tfidf import TfIdfModel, fit_tfidf
from embeddings.token_table import TokenEmbeddingTable


class SemanticEmbedder:
    """
    Semantic item vectors in the token-embedding space:

        v_txt = sum over distinct tokens w of text(v) of tfidf(w, v) * phi(w)

    The embedder does not decide anything about items: OOV tokens are skipped
    and counted, items whose tokens are all OOV get a zero vector and are flagged.
    """

    def __init__(self, table: TokenEmbeddingTable, verbose: bool = True):
        self.table = table
        self.verbose = verbose
        self.oov_tokens = 0
        self.oov_items = np.zeros(0, dtype=bool)

    # --------------------------------------------------
    # Proyección vocabulario tf-idf -> tabla de tokens
    # --------------------------------------------------
    def _vocab_matrix(self, tfidf: TfIdfModel) -> tuple[np.ndarray, np.ndarray]:
        rows = np.zeros((len(tfidf.vocabulary), self.table.dim), dtype=np.float64)
        known = np.zeros(len(tfidf.vocabulary), dtype=bool)
        for token, col in tfidf.vocabulary.items():
            pos = self.table.index.get(token)
            if pos is not None:
                rows[col] = self.table.vectors[pos]
                known[col] = True
        return rows, known

    # --------------------------------------------------
    # Un documento
    # --------------------------------------------------
    def embed_text(self, text: str, tfidf: TfIdfModel) -> np.ndarray:
        out = np.zeros(self.table.dim, dtype=np.float64)
        weights = tfidf.transform(text)
        hit = False
        for token in sorted(weights):
            if token not in self.table:
                self.oov_tokens += 1
                continue
            out += weights[token] * self.table.vector(token)
            hit = True
        if weights and not hit and self.verbose:
            print("[EMBEDDER] WARNING document has only OOV tokens -> zero vector")
        return out

    # --------------------------------------------------
    # Corpus completo (ambos dominios)
    # --------------------------------------------------
    def embed_corpus(self, corpus: list[str], tfidf: TfIdfModel | None = None) -> np.ndarray:
        if tfidf is None:
            tfidf = fit_tfidf(corpus, verbose=self.verbose)

        weights = tfidf.weights()
        vocab_vectors, known = self._vocab_matrix(tfidf)

        vectors = np.asarray(weights @ vocab_vectors, dtype=np.float64)

        has_tokens = np.diff(weights.indptr) > 0
        known_hits = np.asarray(weights[:, known].getnnz(axis=1)).ravel() if known.any() else np.zeros(len(corpus), dtype=int)
        self.oov_tokens = int(weights[:, ~known].nnz) if (~known).any() else 0
        self.oov_items = (known_hits == 0)

        n_oov_only = int((self.oov_items & has_tokens).sum())
        if self.verbose:
            print(
                f"[EMBEDDER] {len(corpus)} item vectors (D_txt={self.table.dim}), "
                f"OOV token slots skipped: {self.oov_tokens}"
            )
            if n_oov_only:
                print(f"[EMBEDDER] WARNING {n_oov_only} items have only OOV tokens -> zero vectors")

        return vectors


def item_semantic_embedding(
    text: str,
    tfidf: TfIdfModel,
    table: TokenEmbeddingTable,
) -> np.ndarray:
    return SemanticEmbedder(table, verbose=False).embed_text(text, tfidf)
