"""
tf-idf statistics over the corpus of BOTH domains.

tf(w, d)  = count(w, d) / |d|
idf(w)    = ln((1 + N_docs) / (1 + df(w))) + 1   (smoothed, always >= 1)
"""

import re
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import scipy.sparse as sp
from sklearn.feature_extraction.text import CountVectorizer, TfidfTransformer

from common.errors import DataError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> List[str]:
    """Lowercase, split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TfIdfModel:
    vocabulary: Dict[str, int]
    idf: np.ndarray
    n_docs: int
    tf: sp.csr_matrix  # n_docs x |vocabulary|, length-normalized counts

    def idf_of(self, token: str) -> float:
        return float(self.idf[self.vocabulary[token]])

    def tf_of(self, token: str, doc: int) -> float:
        col = self.vocabulary.get(token)
        if col is None:
            return 0.0
        return float(self.tf[doc, col])

    def weights(self) -> sp.csr_matrix:
        """Per-document tf-idf weights, one column per distinct token."""
        return sp.csr_matrix(self.tf.multiply(self.idf[None, :]))

    def transform(self, text: str) -> Dict[str, float]:
        """tf-idf weights of an arbitrary document; tokens unknown to the model are skipped."""
        tokens = tokenize(text)
        if not tokens:
            return {}
        counts: Dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        n = len(tokens)
        return {
            t: (c / n) * float(self.idf[self.vocabulary[t]])
            for t, c in counts.items()
            if t in self.vocabulary
        }


def fit_tfidf(corpus: List[str], verbose: bool = True) -> TfIdfModel:
    if not corpus:
        raise DataError("tf-idf needs a non-empty corpus")

    vectorizer = CountVectorizer(
        tokenizer=tokenize,
        lowercase=False,
        token_pattern=None,
        dtype=np.float64,
    )
    try:
        counts = vectorizer.fit_transform(corpus)
    except ValueError as e:
        # sklearn raises on an empty vocabulary
        raise DataError(f"tf-idf corpus has no tokens: {e}") from e

    lengths = np.asarray(counts.sum(axis=1)).ravel()
    n_empty = int((lengths == 0).sum())
    if n_empty and verbose:
        print(f"[TFIDF] WARNING {n_empty} empty documents (zero tf vectors)")

    inv_len = np.divide(1.0, lengths, out=np.zeros_like(lengths), where=lengths > 0)
    tf = sp.csr_matrix(sp.diags(inv_len) @ counts)

    transformer = TfidfTransformer(smooth_idf=True, norm=None)
    transformer.fit(counts)

    vocabulary = {t: int(i) for t, i in vectorizer.vocabulary_.items()}

    if verbose:
        print(f"[TFIDF] {len(corpus)} documents, vocabulary={len(vocabulary)}")

    return TfIdfModel(
        vocabulary=vocabulary,
        idf=np.asarray(transformer.idf_, dtype=np.float64),
        n_docs=len(corpus),
        tf=tf,
    )
