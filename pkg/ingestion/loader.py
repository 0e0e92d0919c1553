import re
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Tuple

from common.errors import DataError
from ingestion.bundle import Domain, RawInteraction

MAX_LISTED_KEYS = 20


@dataclass(frozen=True)
class RawCorpus:
    """Deduplicated records per domain plus the item documents of both domains."""

    records: Dict[Domain, List[RawInteraction]]
    documents: Dict[Domain, Dict[str, str]]

    def counts(self) -> Dict[str, Dict[str, int]]:
        out = {}
        for domain, recs in self.records.items():
            out[domain.value] = {
                "records": len(recs),
                "users": len({r.user_key for r in recs}),
                "items": len({r.item_key for r in recs}),
            }
        return out


# --------------------------------------------------
# Limpieza mínima (no semántica)
# --------------------------------------------------
def clean_document(text: str) -> str:
    if not isinstance(text, str):
        return ""
    text = re.sub(r"\s+", " ", text)
    return text.strip()


def _lines(path: str) -> Iterator[Tuple[int, str]]:
    """(line number, text without the line break); bytes are decoded line by line."""
    with open(path, "rb") as f:
        for line_no, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DataError(f"{path}:{line_no}: not valid UTF-8 ({e.reason} at byte {e.start})") from None
            yield line_no, line.rstrip("\n").rstrip("\r")


# --------------------------------------------------
# 1. Lectura de interacciones (user \t item \t unix-seconds)
# --------------------------------------------------
def read_interactions(path: str, domain: Domain, verbose: bool = True) -> List[RawInteraction]:
    records = []
    for line_no, line in _lines(path):
        if not line.strip():
            continue

        fields = line.split("\t")
        if len(fields) != 3 or not fields[0] or not fields[1]:
            raise DataError(
                f"{path}:{line_no}: expected 'user<TAB>item<TAB>timestamp', got {line!r}"
            )
        try:
            ts = int(fields[2])
        except ValueError:
            raise DataError(
                f"{path}:{line_no}: timestamp {fields[2]!r} is not an integer"
            ) from None

        records.append(RawInteraction(fields[0], fields[1], ts, domain))

    if verbose:
        print(f"[LOADER] {len(records)} {domain.value} records read from {path}")
    return records


# --------------------------------------------------
# 2. Lectura de textos (item \t document)
# --------------------------------------------------
def read_texts(path: str) -> Dict[str, str]:
    texts = {}
    for line_no, line in _lines(path):
        if not line.strip():
            continue
        key, sep, doc = line.partition("\t")
        if not sep or not key:
            raise DataError(
                f"{path}:{line_no}: expected 'item<TAB>document', got {line!r}"
            )
        texts[key] = clean_document(doc)
    return texts


# --------------------------------------------------
# 3. Ingesta: validación + deduplicación
# --------------------------------------------------
def ingest(
    records: Iterable[RawInteraction],
    texts: Dict[Domain, Dict[str, str]],
    verbose: bool = True,
) -> RawCorpus:
    grouped: Dict[Domain, List[RawInteraction]] = {d: [] for d in Domain}
    seen = set()
    n_dupes = 0

    for pos, r in enumerate(records, start=1):
        if r.timestamp < 0:
            raise DataError(
                f"record {pos} ({r.domain.value}): negative timestamp {r.timestamp}"
            )
        key = (r.domain, r.user_key, r.item_key, r.timestamp)
        if key in seen:
            n_dupes += 1
            continue
        seen.add(key)
        grouped[r.domain].append(r)

    documents: Dict[Domain, Dict[str, str]] = {}
    for domain in Domain:
        docs = texts.get(domain, {})
        missing = sorted({r.item_key for r in grouped[domain]} - docs.keys())
        if missing:
            listed = ", ".join(missing[:MAX_LISTED_KEYS])
            more = f" (+{len(missing) - MAX_LISTED_KEYS} more)" if len(missing) > MAX_LISTED_KEYS else ""
            raise DataError(
                f"{len(missing)} {domain.value} items have no text entry: {listed}{more}"
            )
        documents[domain] = dict(docs)

    if n_dupes and verbose:
        print(f"[LOADER] {n_dupes} duplicate records dropped")

    return RawCorpus(records=grouped, documents=documents)


def write_corpus(path: str, documents: List[str]) -> None:
    """One document per line, keyed by dense item index."""
    with open(path, "w", encoding="utf-8") as f:
        for idx, doc in enumerate(documents):
            f.write(f"{idx}\t{clean_document(doc)}\n")


def read_corpus(path: str) -> List[str]:
    docs: Dict[int, str] = {}
    for line_no, line in _lines(path):
        if not line:
            continue
        key, sep, doc = line.partition("\t")
        if not sep or not key.isdigit():
            raise DataError(f"{path}:{line_no}: expected 'index<TAB>document'")
        docs[int(key)] = doc

    if sorted(docs) != list(range(len(docs))):
        raise DataError(f"{path}: item indices are not contiguous from 0")
    return [docs[i] for i in range(len(docs))]
