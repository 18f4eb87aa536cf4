"""Message vectors for content-similarity analysis.

Two routes: an L2-normalised term-frequency vectoriser (default) and a
document-embedding model in which every message owns a vector trained as
global context for each of its words, alongside skip-gram word vectors,
with negative sampling.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from .ingest import tokenize

logger = logging.getLogger(__name__)


class SimilarityError(ValueError):
    pass


class DocVectors:
    """Row-per-message vectors; dense ndarray or CSR matrix."""

    def __init__(self, ids: Sequence[str], matrix, empty: np.ndarray | None = None):
        self.ids = list(ids)
        self.matrix = matrix
        self.index = {m: i for i, m in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ValueError("duplicate message ids")
        if empty is None:
            empty = self.norms() == 0
        self.empty = np.asarray(empty, dtype=bool)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, message_id) -> bool:
        return message_id in self.index

    def norms(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return np.sqrt(np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel())
        return np.linalg.norm(self.matrix, axis=1)

    def vector(self, message_id) -> np.ndarray:
        row = self.matrix[self.index[message_id]]
        return row.toarray().ravel() if sp.issparse(row) else np.asarray(row, dtype=float)

    def pair_cosines(self, a_ids: Sequence[str], b_ids: Sequence[str]) -> np.ndarray:
        """Cosine of each (a, b) pair; NaN where either vector is zero."""
        ia = np.fromiter((self.index[m] for m in a_ids), dtype=np.int64, count=len(a_ids))
        ib = np.fromiter((self.index[m] for m in b_ids), dtype=np.int64, count=len(b_ids))
        if ia.size == 0:
            return np.zeros(0)
        A, B = self.matrix[ia], self.matrix[ib]
        if sp.issparse(A):
            dots = np.asarray(A.multiply(B).sum(axis=1)).ravel()
        else:
            dots = np.einsum("ij,ij->i", A, B)
        norms = self.norms()
        denom = norms[ia] * norms[ib]
        out = np.full(ia.size, np.nan)
        ok = denom > 0
        out[ok] = np.clip(dots[ok] / denom[ok], -1.0, 1.0)
        return out


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 and nv == 0:
        raise SimilarityError("cosine of two zero vectors is undefined")
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _as_pairs(corpus) -> list[tuple[str, list[str]]]:
    items = corpus.items() if isinstance(corpus, Mapping) else corpus
    out = []
    for mid, body in items:
        out.append((mid, tokenize(body) if isinstance(body, str) else list(body)))
    return out


def tf_vectorize(corpus) -> DocVectors:
    """L2-normalised term-frequency rows over the corpus vocabulary.

    `corpus` maps message id to text (or token list). Empty bodies get a
    zero row and are flagged in ``DocVectors.empty``.
    """
    pairs = _as_pairs(corpus)
    vocab: dict[str, int] = {}
    for _, toks in pairs:
        for t in toks:
            if t not in vocab:
                vocab[t] = 0
    for i, t in enumerate(sorted(vocab)):
        vocab[t] = i
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for _, toks in pairs:
        counts: dict[int, int] = {}
        for t in toks:
            j = vocab[t]
            counts[j] = counts.get(j, 0) + 1
        cols = sorted(counts)
        vals = np.array([counts[j] for j in cols], dtype=float)
        norm = np.sqrt((vals**2).sum())
        indices.extend(cols)
        data.extend((vals / norm).tolist() if norm > 0 else [])
        indptr.append(len(indices))
    m = sp.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(pairs), max(len(vocab), 1)),
    )
    empty = np.diff(m.indptr) == 0
    return DocVectors([p[0] for p in pairs], m, empty)


# -- document embeddings ------------------------------------------------------

@dataclass
class EmbeddingParams:
    d: int = 32
    window: int = 5
    iterations: int = 10
    negatives: int = 5
    alpha: float = 0.025
    min_alpha: float = 0.0001
    min_count: int = 5
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.d < 1 or self.window < 1 or self.iterations < 1:
            raise ValueError("d, window and iterations must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")


@dataclass
class EmbeddingResult:
    doc_vectors: DocVectors
    vocab: list[str]
    word_vectors: np.ndarray
    losses: list[float] = field(default_factory=list)  # objective after each training pass


_OBJECTIVE_DOCS = 2000


@njit(cache=True)
def _next(state):
    return state * np.uint64(25214903917) + np.uint64(11)


@njit(cache=True)
def _uniform(state):
    return ((state >> np.uint64(11)) & np.uint64((1 << 53) - 1)) / 9007199254740992.0


@njit(cache=True)
def _sgns(h, target, w_out, cum, negatives, alpha, state, update_out, grad):
    """One negative-sampling step; updates `h` in place. Returns (loss, state)."""
    d = h.shape[0]
    for k in range(d):
        grad[k] = 0.0
    loss = 0.0
    for n in range(negatives + 1):
        if n == 0:
            t = target
            label = 1.0
        else:
            state = _next(state)
            t = np.searchsorted(cum, _uniform(state), side="right")
            if t >= cum.shape[0]:
                t = cum.shape[0] - 1
            if t == target:
                continue
            label = 0.0
        f = 0.0
        for k in range(d):
            f += h[k] * w_out[t, k]
        if f > 30.0:
            f = 30.0
        elif f < -30.0:
            f = -30.0
        s = 1.0 / (1.0 + np.exp(-f))
        if label == 1.0:
            loss -= np.log(s + 1e-12)
        else:
            loss -= np.log(1.0 - s + 1e-12)
        g = (label - s) * alpha
        for k in range(d):
            grad[k] += g * w_out[t, k]
        if update_out:
            for k in range(d):
                w_out[t, k] += g * h[k]
    for k in range(d):
        h[k] += grad[k]
    return loss, state


@njit(cache=True)
def _train_pass(doc_ptr, words, doc_vecs, w_in, w_out, cum, window, negatives,
                alpha0, alpha1, total, done, state):
    n_docs = doc_ptr.shape[0] - 1
    grad = np.zeros(doc_vecs.shape[1])
    loss = 0.0
    n_terms = 0
    for doc in range(n_docs):
        lo = doc_ptr[doc]
        hi = doc_ptr[doc + 1]
        for i in range(lo, hi):
            alpha = alpha0 - (alpha0 - alpha1) * done / total
            if alpha < alpha1:
                alpha = alpha1
            w = words[i]
            l, state = _sgns(doc_vecs[doc], w, w_out, cum, negatives, alpha, state, True, grad)
            loss += l
            n_terms += 1
            j0 = i - window
            if j0 < lo:
                j0 = lo
            j1 = i + window + 1
            if j1 > hi:
                j1 = hi
            for j in range(j0, j1):
                if j == i:
                    continue
                l, state = _sgns(w_in[words[j]], w, w_out, cum, negatives, alpha, state, True, grad)
                loss += l
                n_terms += 1
            done += 1
    return loss, n_terms, done, state


@njit(cache=True)
def _objective(doc_ptr, words, docs, doc_vecs, w_in, w_out, cum, window, negatives, state):
    """Mean negative-sampling loss over the terms of `docs`, parameters frozen.

    Uses the same noise draws for a given `state`, so values from successive
    passes are comparable.
    """
    loss = 0.0
    n_terms = 0
    V = cum.shape[0]
    for doc in docs:
        lo = doc_ptr[doc]
        hi = doc_ptr[doc + 1]
        for i in range(lo, hi):
            w = words[i]
            j0 = max(lo, i - window)
            j1 = min(hi, i + window + 1)
            for j in range(j0 - 1, j1):
                if j == i:
                    continue
                h = doc_vecs[doc] if j == j0 - 1 else w_in[words[j]]
                for n in range(negatives + 1):
                    if n == 0:
                        t = w
                    else:
                        state = _next(state)
                        t = np.searchsorted(cum, _uniform(state), side="right")
                        if t >= V:
                            t = V - 1
                        if t == w:
                            continue
                    f = 0.0
                    for k in range(h.shape[0]):
                        f += h[k] * w_out[t, k]
                    f = min(30.0, max(-30.0, f))
                    s = 1.0 / (1.0 + np.exp(-f))
                    loss -= np.log(s + 1e-12) if n == 0 else np.log(1.0 - s + 1e-12)
                n_terms += 1
    return loss / max(n_terms, 1)


@njit(cache=True)
def _infer(doc_ptr, words, seeds, w_out, cum, negatives, alpha0, alpha1, passes, d):
    n_docs = doc_ptr.shape[0] - 1
    out = np.zeros((n_docs, d))
    grad = np.zeros(d)
    for doc in range(n_docs):
        lo = doc_ptr[doc]
        hi = doc_ptr[doc + 1]
        if hi == lo:
            continue
        state = seeds[doc]
        h = out[doc]
        for k in range(d):
            state = _next(state)
            h[k] = (_uniform(state) - 0.5) / d
        total = passes * (hi - lo)
        done = 0
        for p in range(passes):
            for i in range(lo, hi):
                alpha = alpha0 - (alpha0 - alpha1) * done / total
                _, state = _sgns(h, words[i], w_out, cum, negatives, alpha, state, False, grad)
                done += 1
    return out


def _content_seed(seed: int, ids: np.ndarray) -> int:
    digest = hashlib.blake2b(ids.astype("<i8").tobytes(), digest_size=8, key=str(seed).encode()).digest()
    return int.from_bytes(digest, "little")


def train_embeddings(corpus, params: EmbeddingParams | None = None) -> EmbeddingResult:
    """Train word and document vectors; deterministic for a given seed.

    After joint training the returned document vectors are re-estimated with
    the word output weights frozen, each from a starting point and random
    stream derived from the seed and the document's own tokens, so equal
    documents receive equal vectors.
    """
    params = params or EmbeddingParams()
    if params.workers != 1:
        logger.info("embedding training runs single-worker; workers=%d ignored", params.workers)
    pairs = _as_pairs(corpus)
    counts: dict[str, int] = {}
    for _, toks in pairs:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    vocab = sorted((w for w, c in counts.items() if c >= params.min_count), key=lambda w: (-counts[w], w))
    if not vocab:
        raise ValueError("vocabulary is empty after min-count filtering")
    index = {w: i for i, w in enumerate(vocab)}
    doc_ptr = [0]
    words: list[int] = []
    for _, toks in pairs:
        words.extend(index[t] for t in toks if t in index)
        doc_ptr.append(len(words))
    doc_ptr_a = np.asarray(doc_ptr, dtype=np.int64)
    words_a = np.asarray(words, dtype=np.int64)

    freq = np.array([counts[w] for w in vocab], dtype=float) ** 0.75
    cum = np.cumsum(freq / freq.sum())
    cum[-1] = 1.0

    rng = np.random.default_rng(params.seed)
    d = params.d
    w_in = (rng.random((len(vocab), d)) - 0.5) / d
    w_out = np.zeros((len(vocab), d))
    doc_vecs = (rng.random((len(pairs), d)) - 0.5) / d
    state = np.uint64(rng.integers(1, 2**63))

    total = max(1, words_a.size * params.iterations)
    done = 0
    # objective tracked on a fixed strided sample of documents
    probe = np.arange(0, len(pairs), max(1, len(pairs) // _OBJECTIVE_DOCS), dtype=np.int64)
    probe_state = np.uint64(rng.integers(1, 2**63))
    losses = []
    for _ in range(params.iterations):
        _, _, done, state = _train_pass(
            doc_ptr_a, words_a, doc_vecs, w_in, w_out, cum, params.window, params.negatives,
            params.alpha, params.min_alpha, total, done, state,
        )
        # numba hands the state back as a Python int; keep it unsigned
        state = np.uint64(state)
        losses.append(float(_objective(doc_ptr_a, words_a, probe, doc_vecs, w_in, w_out, cum,
                                       params.window, params.negatives, probe_state)))

    seeds = np.array(
        [_content_seed(params.seed, words_a[doc_ptr_a[i]:doc_ptr_a[i + 1]]) for i in range(len(pairs))],
        dtype=np.uint64,
    )
    vecs = _infer(doc_ptr_a, words_a, seeds, w_out, cum, params.negatives,
                  params.alpha, params.min_alpha, params.iterations, d)
    empty = np.diff(doc_ptr_a) == 0
    return EmbeddingResult(DocVectors([p[0] for p in pairs], vecs, empty), vocab, w_in, losses)


# -- persistence ---------------------------------------------------------------
# Layout (little-endian): uint32 dimension, uint32 count, then per vector
# uint16 id byte length, UTF-8 id bytes, dimension float32 values.

def write_vectors(path: str | Path, vectors: DocVectors) -> None:
    m = vectors.matrix.toarray() if sp.issparse(vectors.matrix) else np.asarray(vectors.matrix)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", m.shape[1], m.shape[0]))
        for mid, row in zip(vectors.ids, m):
            raw = mid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(row.astype("<f4").tobytes())


def read_vectors(path: str | Path) -> DocVectors:
    data = Path(path).read_bytes()
    dim, count = struct.unpack_from("<II", data, 0)
    pos = 8
    ids = []
    rows = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        ids.append(data[pos:pos + n].decode("utf-8"))
        pos += n
        rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += 4 * dim
    if pos != len(data):
        raise ValueError("trailing bytes in vector file")
    return DocVectors(ids, rows.astype(float))
