"""Dirichlet compound multinomial (Polya) likelihoods and the partition prior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .corpus import Document
from .errors import EmptyDocument


@dataclass(frozen=True)
class DcmParams:
    alpha: float = 0.01     # symmetric Dirichlet pseudo-count per term
    kappa: float = 100.0    # concentration placed on the node's term profile
    vocab_size: int = 1
    conditioning: str = "loo"  # "loo" | "full"

    def __post_init__(self):
        assert self.alpha > 0 and self.kappa > 0 and self.vocab_size >= 1
        assert self.conditioning in ("loo", "full")


@dataclass
class ClusterStats:
    doc_count: int
    pooled_counts: dict[int, int]
    log_f: float = 0.0

    @classmethod
    def merged(cls, a: "ClusterStats", b: "ClusterStats") -> "ClusterStats":
        pooled = dict(a.pooled_counts)
        for tid, c in b.pooled_counts.items():
            pooled[tid] = pooled.get(tid, 0) + c
        return cls(doc_count=a.doc_count + b.doc_count, pooled_counts=pooled)


def log_dcm_doc_given_node(d: Document, node_counts: dict[int, int],
                           params: DcmParams) -> float:
    """Log Polya likelihood of d's counts under the node-informed prior.

    alpha_w = alpha + kappa * tf_w(node) / sum_w tf_w(node); symmetric alpha
    when the node carries no terms.
    """
    if d.length == 0 and not d.counts:
        return 0.0  # empty product
    if d.length == 0:
        raise EmptyDocument(d.id)
    node_total = sum(node_counts.values()) if node_counts else 0
    w = params.vocab_size
    if node_total > 0:
        big_a = params.alpha * w + params.kappa
    else:
        big_a = params.alpha * w
    out = gammaln(big_a) - gammaln(big_a + d.length)
    for tid, c in d.counts.items():
        if node_total > 0:
            aw = params.alpha + params.kappa * node_counts.get(tid, 0) / node_total
        else:
            aw = params.alpha
        out += gammaln(aw + c) - gammaln(aw)
    return float(out)


def log_cluster_marginal(stats: ClusterStats, docs: list[Document],
                         params: DcmParams) -> float:
    """Sum of member log likelihoods against the cluster's pooled mass.

    With "loo" conditioning each document is scored against the pooled counts
    of the other members; with "full" against the entire pool.
    """
    assert stats.doc_count >= 1 and len(docs) == stats.doc_count
    total = 0.0
    for d in docs:
        if params.conditioning == "loo":
            rest = dict(stats.pooled_counts)
            for tid, c in d.counts.items():
                left = rest.get(tid, 0) - c
                if left > 0:
                    rest[tid] = left
                else:
                    rest.pop(tid, None)
            total += log_dcm_doc_given_node(d, rest, params)
        else:
            total += log_dcm_doc_given_node(d, stats.pooled_counts, params)
    return total


def pi_prior(num_children: int, pi0: float) -> float:
    """Prior probability that a node's documents form one flat cluster."""
    assert num_children >= 2
    return 1.0 - (1.0 - pi0) ** (num_children - 1)


def log_dcm_docs_vs_node(X, rows: np.ndarray, lengths: np.ndarray,
                         node_idx: np.ndarray, node_val: np.ndarray,
                         params: DcmParams) -> np.ndarray:
    """Vectorized log_dcm_doc_given_node for many docs against one node.

    ``X`` is the docs x vocab CSR count matrix; ``node_idx``/``node_val`` is
    the node's sorted sparse term profile.
    """
    w = params.vocab_size
    node_total = float(node_val.sum()) if len(node_val) else 0.0
    big_a = params.alpha * w + (params.kappa if node_total > 0 else 0.0)
    out = gammaln(big_a) - gammaln(big_a + lengths[rows])
    nnz = X.indptr[rows + 1] - X.indptr[rows]
    row_of = np.repeat(np.arange(len(rows)), nnz)
    ent_idx = np.concatenate([X.indices[X.indptr[r]:X.indptr[r + 1]] for r in rows]) \
        if len(rows) else np.array([], dtype=np.int64)
    ent_dat = np.concatenate([X.data[X.indptr[r]:X.indptr[r + 1]] for r in rows]) \
        if len(rows) else np.array([])
    aw = np.full(len(ent_idx), params.alpha)
    if node_total > 0 and len(node_idx):
        pos = np.searchsorted(node_idx, ent_idx)
        pos = np.clip(pos, 0, len(node_idx) - 1)
        hit = node_idx[pos] == ent_idx
        aw[hit] += params.kappa * node_val[pos[hit]] / node_total
    per_entry = gammaln(aw + ent_dat) - gammaln(aw)
    out += np.bincount(row_of, weights=per_entry, minlength=len(rows))
    return np.asarray(out, dtype=np.float64)


def batch_log_marginal(indices: np.ndarray, data: np.ndarray, row_of: np.ndarray,
                       row_lengths: np.ndarray, pool_idx: np.ndarray,
                       pool_val: np.ndarray, params: DcmParams) -> float:
    """Vectorized log_cluster_marginal over CSR pieces of the member docs.

    ``indices``/``data`` are the concatenated term ids and counts of the
    member rows, ``row_of`` maps each entry to its member row, and
    ``row_lengths`` holds per-member token totals. ``pool_idx``/``pool_val``
    is the sorted sparse pooled count vector of the cluster.
    """
    if len(row_lengths) == 0:
        return 0.0
    w = params.vocab_size
    pool_total = float(pool_val.sum())
    if len(indices) == 0:
        return 0.0
    pos = np.searchsorted(pool_idx, indices)
    pw = pool_val[pos]
    if params.conditioning == "loo":
        rest_w = pw - data
        rest_total = pool_total - row_lengths  # per row
    else:
        rest_w = pw
        rest_total = np.full(len(row_lengths), pool_total)
    nonempty = rest_total > 0
    big_a = np.where(nonempty, params.alpha * w + params.kappa, params.alpha * w)
    out = float(np.sum(gammaln(big_a) - gammaln(big_a + row_lengths)))
    denom = rest_total[row_of]
    safe = denom > 0
    aw = np.full(len(indices), params.alpha)
    aw[safe] += params.kappa * rest_w[safe] / denom[safe]
    out += float(np.sum(gammaln(aw + data) - gammaln(aw)))
    return out
