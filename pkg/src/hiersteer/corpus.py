"""Documents, vocabulary, term vectors, embeddings, and similarity."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDocument, SchemaViolation, ZeroVector

# Compact English stopword list; configurable through TokenizerConfig.
DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have he her his i if in
    into is it its me my no nor not of on or our she so than that the their
    them then there these they this to was we were what when where which who
    will with you your""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class TokenizerConfig:
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    min_token_len: int = 2


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Lowercased alphanumeric tokens, stopwords and short tokens dropped."""
    out = []
    for tok in _TOKEN_RE.findall(text.lower()):
        if len(tok) < config.min_token_len or tok in config.stopwords:
            continue
        out.append(tok)
    return out


class Vocabulary:
    """Bijective word <-> dense term-id map."""

    def __init__(self):
        self._id_of: dict[str, int] = {}
        self._word_of: list[str] = []

    def __len__(self) -> int:
        return len(self._word_of)

    @property
    def size(self) -> int:
        return len(self._word_of)

    def add(self, word: str) -> int:
        tid = self._id_of.get(word)
        if tid is None:
            tid = len(self._word_of)
            self._id_of[word] = tid
            self._word_of.append(word)
        return tid

    def id_of(self, word: str) -> int | None:
        return self._id_of.get(word)

    def word(self, tid: int) -> str:
        return self._word_of[tid]

    def words(self) -> list[str]:
        return list(self._word_of)


@dataclass
class Document:
    id: str
    counts: dict[int, int]
    length: int
    title: str | None = None
    body: str | None = None

    @classmethod
    def from_tokens(cls, doc_id: str, tokens: list[str], vocab: Vocabulary,
                    title: str | None = None, body: str | None = None) -> "Document":
        counts: dict[int, int] = {}
        for tok in tokens:
            tid = vocab.add(tok)
            counts[tid] = counts.get(tid, 0) + 1
        return cls(id=doc_id, counts=counts, length=len(tokens), title=title, body=body)


class Corpus:
    """Immutable document collection over a shared vocabulary."""

    def __init__(self, docs: list[Document], vocab: Vocabulary):
        self.docs = docs
        self.vocab = vocab
        self.index_of = {d.id: i for i, d in enumerate(docs)}
        self._matrix: sp.csr_matrix | None = None
        self._lengths: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.docs)

    def doc(self, doc_id: str) -> Document:
        return self.docs[self.index_of[doc_id]]

    @property
    def matrix(self) -> sp.csr_matrix:
        """Docs x vocab CSR count matrix (float64)."""
        if self._matrix is None or self._matrix.shape[1] != self.vocab.size:
            self._matrix = docs_to_matrix(self.docs, self.vocab.size)
        return self._matrix

    @property
    def lengths(self) -> np.ndarray:
        if self._lengths is None or len(self._lengths) != len(self.docs):
            self._lengths = np.array([d.length for d in self.docs], dtype=np.float64)
        return self._lengths

    def invalidate_cache(self) -> None:
        self._matrix = None
        self._lengths = None


def docs_to_matrix(docs: list[Document], width: int) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for d in docs:
        for tid in sorted(d.counts):
            indices.append(tid)
            data.append(float(d.counts[tid]))
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(docs), width),
    )


def build_corpus(records: list[dict], config: TokenizerConfig = TokenizerConfig()) -> Corpus:
    """Build a corpus from {"id", "title"?, "text"} records."""
    vocab = Vocabulary()
    docs = []
    seen = set()
    for i, rec in enumerate(records):
        if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
            raise SchemaViolation("record must have 'id' and 'text'", path=f"/{i}")
        if rec["id"] in seen:
            raise SchemaViolation(f"duplicate document id {rec['id']!r}", path=f"/{i}/id")
        seen.add(rec["id"])
        tokens = tokenize(rec["text"], config)
        docs.append(Document.from_tokens(str(rec["id"]), tokens, vocab,
                                         title=rec.get("title"), body=rec["text"]))
    return Corpus(docs, vocab)


def load_corpus_jsonl(path: str, config: TokenizerConfig = TokenizerConfig()) -> Corpus:
    records = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise SchemaViolation(f"invalid JSON on line {ln + 1}: {e}", path=f"/{ln}")
    return build_corpus(records, config)


class EmbeddingStore:
    """Dense word vectors keyed by term id; missing terms are simply absent."""

    def __init__(self, dimension: int, vectors: dict[int, np.ndarray]):
        self.dimension = dimension
        self.vectors = vectors

    def __contains__(self, tid: int) -> bool:
        return tid in self.vectors


def load_embeddings(path: str, vocab: Vocabulary) -> EmbeddingStore:
    """Plain-text vectors, one "word f1 ... fd" per line.

    An optional "count dim" header line is auto-detected.
    """
    vectors: dict[int, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh):
            parts = line.rstrip("\n").split(" ")
            if ln == 0 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            if len(parts) < 2:
                continue
            word, vals = parts[0], parts[1:]
            vec = np.array([float(v) for v in vals if v != ""], dtype=np.float64)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise SchemaViolation(f"vector dimension mismatch on line {ln + 1}")
            tid = vocab.id_of(word)
            if tid is not None:
                vectors[tid] = vec
    return EmbeddingStore(dimension=dim or 0, vectors=vectors)


class TfIdfModel:
    """idf = log(N/df); document vectors are L2-normalized tf-idf."""

    def __init__(self, corpus: Corpus):
        n = max(1, len(corpus))
        df = np.zeros(corpus.vocab.size)
        for d in corpus.docs:
            for tid in d.counts:
                df[tid] += 1
        with np.errstate(divide="ignore"):
            self.idf = np.where(df > 0, np.log(n / np.maximum(df, 1)), 0.0)
        self.width = corpus.vocab.size

    def vector(self, doc: Document) -> np.ndarray:
        v = np.zeros(self.width)
        for tid, c in doc.counts.items():
            v[tid] = c * self.idf[tid]
        norm = np.linalg.norm(v)
        if norm == 0:
            # All-idf-zero docs (every term everywhere): fall back to raw counts.
            for tid, c in doc.counts.items():
                v[tid] = c
            norm = np.linalg.norm(v)
        return v / norm if norm > 0 else v


def doc_vector(d: Document, store: EmbeddingStore | None, fallback: TfIdfModel) -> np.ndarray:
    """Count-weighted mean of embedding vectors, L2-normalized.

    Falls back to the tf-idf vector when no term is in the store.
    """
    if d.length == 0:
        raise EmptyDocument(d.id)
    if store is not None:
        acc = np.zeros(store.dimension)
        weight = 0
        for tid, c in d.counts.items():
            vec = store.vectors.get(tid)
            if vec is not None:
                acc += c * vec
                weight += c
        if weight > 0:
            acc /= weight
            norm = np.linalg.norm(acc)
            if norm > 0:
                return acc / norm
    return fallback.vector(d)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine of an all-zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


def doc_vectors_matrix(corpus: Corpus, store: EmbeddingStore | None,
                       fallback: TfIdfModel) -> np.ndarray:
    """Stacked doc_vector rows for the whole corpus."""
    rows = [doc_vector(d, store, fallback) if d.length > 0 else
            np.zeros(store.dimension if store else fallback.width)
            for d in corpus.docs]
    width = max(len(r) for r in rows) if rows else 0
    out = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out
