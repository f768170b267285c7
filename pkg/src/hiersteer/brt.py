"""Greedy agglomerative Bayesian rose tree clustering, with and without constraints.

Each document starts as its own sub-tree; at every step the candidate merge
(join / absorb-left / absorb-right / collapse) with the highest
log-likelihood ratio minus lambda times the number of newly violated
constraints is applied, until a single tree remains.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .dcm import ClusterStats, DcmParams, batch_log_marginal, pi_prior
from .errors import NodeNotFound, TooFewDocuments
from .rosetree import RoseTree, TripleFan

MODES = ("join", "absorb-left", "absorb-right", "collapse")
_MODE_RANK = {m: i for i, m in enumerate(MODES)}

# Dense doc-count lookup is only built when it stays small.
_DENSE_LIMIT = 2 * 10**8


@dataclass(frozen=True)
class BrtConfig:
    pi0: float = 0.5
    approx: bool = False
    approx_neighbors: int = 50
    approx_refresh: int = 100


@dataclass
class MergeCandidate:
    left: int          # active root node id (smaller creation index)
    right: int
    mode: str
    log_likelihood_ratio: float
    violations: int
    lam: float

    @property
    def log_posterior_ratio(self) -> float:
        return self.log_likelihood_ratio - self.lam * self.violations


@dataclass
class _ActiveTree:
    root: int                  # node id in the output arena
    cidx: int                  # creation index (tie-breaking)
    rows: np.ndarray           # corpus row indices of member docs
    ind: np.ndarray            # concatenated member term ids (CSR order)
    dat: np.ndarray            # concatenated member term counts
    row_lengths: np.ndarray    # per-member token totals
    pool_idx: np.ndarray       # sorted distinct term ids of the pool
    pool_val: np.ndarray
    log_ev: float              # log p(D|T)
    childsum: float            # sum of children's log evidences
    nch: int                   # number of children of the root
    doc_ids: list[str]
    nnz_per_row: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))


def _merge_pool(ai, av, bi, bv):
    idx = np.concatenate([ai, bi])
    val = np.concatenate([av, bv])
    uniq, inv = np.unique(idx, return_inverse=True)
    out = np.zeros(len(uniq))
    np.add.at(out, inv, val)
    return uniq, out


def _mode_maps_root(host_tree: int, left: int, right: int, mode: str) -> bool:
    """Whether a pair whose LCA is the root of ``host_tree`` keeps its LCA at
    the merged tree's root under the given merge mode."""
    if mode == "join":
        return False
    if mode == "collapse":
        return True
    if mode == "absorb-left":
        return host_tree == left
    return host_tree == right  # absorb-right


class ForestState:
    """Active sub-trees plus per-constraint satisfiability bookkeeping."""

    def __init__(self, corpus: Corpus, params: DcmParams, config: BrtConfig,
                 lam: float = 0.0,
                 constraints: list[TripleFan] | None = None,
                 doc_ids: list[str] | None = None):
        self.corpus = corpus
        self.params = params
        self.config = config
        self.lam = lam
        self.tree = RoseTree()
        self.trees: dict[int, _ActiveTree] = {}
        self.alive: set[int] = set()
        self.root_of_doc: dict[str, int] = {}
        self.leaf_of_doc: dict[str, int] = {}
        self._heap: list = []
        self._merges_done = 0
        self.violations_total = 0
        self._neighbors: dict[int, list[int]] = {}
        self._scored: set[tuple[int, int]] = set()

        ids = doc_ids if doc_ids is not None else [d.id for d in corpus.docs]
        if not ids:
            raise TooFewDocuments("corpus is empty")
        X = corpus.matrix
        lengths = corpus.lengths
        self._X = X
        self._dense = None
        if X.shape[0] * X.shape[1] <= _DENSE_LIMIT:
            self._dense = np.asarray(X.todense())

        for i, doc_id in enumerate(ids):
            row = corpus.index_of[doc_id]
            leaf = self.tree.new_node(label=doc_id, docs=[doc_id])
            leaf.stats = ClusterStats(doc_count=1,
                                      pooled_counts=dict(corpus.docs[row].counts))
            start, end = X.indptr[row], X.indptr[row + 1]
            ind = X.indices[start:end].astype(np.int64)
            dat = X.data[start:end].copy()
            log_ev = self._singleton_log_f(ind, dat, lengths[row])
            self.trees[leaf.id] = _ActiveTree(
                root=leaf.id, cidx=i, rows=np.array([row], dtype=np.int64),
                ind=ind, dat=dat,
                row_lengths=np.array([lengths[row]]),
                pool_idx=ind.copy(), pool_val=dat.copy(),
                log_ev=log_ev, childsum=log_ev, nch=0, doc_ids=[doc_id],
                nnz_per_row=np.array([len(ind)], dtype=np.int64))
            self.alive.add(leaf.id)
            self.root_of_doc[doc_id] = leaf.id
            self.leaf_of_doc[doc_id] = leaf.id

        # Constraint bookkeeping: pending constraints indexed per active tree.
        present = set(ids)
        self.pending: dict[int, TripleFan] = {}
        self.cids_of_doc: dict[str, list[int]] = {}
        self.tree_counts: dict[int, dict[int, int]] = {t: {} for t in self.alive}
        if constraints and lam > 0:
            for cid, tf in enumerate(constraints):
                if not all(m in present for m in tf.members):
                    continue
                self.pending[cid] = tf
                for m in tf.members:
                    self.cids_of_doc.setdefault(m, []).append(cid)
                    tc = self.tree_counts[self.root_of_doc[m]]
                    tc[cid] = tc.get(cid, 0) + 1

        self._init_candidates()

    # ----- probability scoring -----

    def _singleton_log_f(self, ind, dat, length) -> float:
        p = self.params
        if length == 0:
            return 0.0
        w = p.vocab_size
        if p.conditioning == "loo":
            big_a = p.alpha * w
            from scipy.special import gammaln
            out = gammaln(big_a) - gammaln(big_a + length)
            out += float(np.sum(gammaln(p.alpha + dat) - gammaln(p.alpha)))
            return float(out)
        return batch_log_marginal(ind, dat, np.zeros(len(ind), dtype=np.int64),
                                  np.array([length]), ind, dat, p)

    def _pair_log_f(self, ti: _ActiveTree, tj: _ActiveTree):
        ind = np.concatenate([ti.ind, tj.ind])
        dat = np.concatenate([ti.dat, tj.dat])
        row_lengths = np.concatenate([ti.row_lengths, tj.row_lengths])
        nnz = np.concatenate([ti.nnz_per_row, tj.nnz_per_row])
        row_of = np.repeat(np.arange(len(row_lengths)), nnz)
        pool_idx, pool_val = _merge_pool(ti.pool_idx, ti.pool_val,
                                         tj.pool_idx, tj.pool_val)
        logf = batch_log_marginal(ind, dat, row_of, row_lengths,
                                  pool_idx, pool_val, self.params)
        return logf, (ind, dat, row_lengths, nnz, pool_idx, pool_val)

    def _log_p_merged(self, logf: float, childsum: float, arity: int) -> float:
        pi0 = self.config.pi0
        pi_t = pi_prior(max(2, arity), pi0)
        log_pi = math.log(pi_t)
        if pi_t >= 1.0:
            return log_pi + logf
        log_1mpi = (arity - 1) * math.log1p(-pi0)
        return float(np.logaddexp(log_pi + logf, log_1mpi + childsum))

    def _mode_params(self, ti: _ActiveTree, tj: _ActiveTree, mode: str):
        if mode == "join":
            return 2, ti.log_ev + tj.log_ev
        if mode == "absorb-left":
            return ti.nch + 1, ti.childsum + tj.log_ev
        if mode == "absorb-right":
            return tj.nch + 1, tj.childsum + ti.log_ev
        return ti.nch + tj.nch, ti.childsum + tj.childsum  # collapse

    def _valid_modes(self, ti: _ActiveTree, tj: _ActiveTree) -> list[str]:
        modes = ["join"]
        if ti.nch >= 2:
            modes.append("absorb-left")
        if tj.nch >= 2:
            modes.append("absorb-right")
        if ti.nch >= 2 and tj.nch >= 2:
            modes.append("collapse")
        return modes

    def likelihood_ratio(self, left: int, right: int, mode: str) -> float:
        ti, tj = self.trees[left], self.trees[right]
        logf, _ = self._pair_log_f(ti, tj)
        arity, childsum = self._mode_params(ti, tj, mode)
        return self._log_p_merged(logf, childsum, arity) - ti.log_ev - tj.log_ev

    # ----- constraint satisfiability -----

    def _lca_in_active(self, a: str, b: str) -> int:
        x, y = self.leaf_of_doc[a], self.leaf_of_doc[b]
        anc = set()
        n = x
        while n is not None:
            anc.add(n)
            n = self.tree.nodes[n].parent
        n = y
        while n not in anc:
            n = self.tree.nodes[n].parent
        return n

    def _pair_lca_at_mroot(self, x: str, y: str, left: int, right: int,
                           mode: str) -> bool:
        tx, ty = self.root_of_doc[x], self.root_of_doc[y]
        if tx != ty:
            return True  # cross-tree pair meets exactly at the merged root
        if self._lca_in_active(x, y) != tx:
            return False
        return _mode_maps_root(tx, left, right, mode)

    def _post_merge_status(self, tf: TripleFan, left: int, right: int,
                           mode: str) -> str:
        """Status of a pending constraint after merging left/right: one of
        "pending", "violated", "satisfied"."""
        merged = {left, right}
        locs = [self.root_of_doc[m] for m in tf.members]
        inside = [loc in merged for loc in locs]
        k = sum(inside)
        if k < 2:
            return "pending"
        if tf.kind == "triple":
            p, q = tf.pair
            o = next(m for m in tf.members if m not in (p, q))
            if k == 3:
                return "violated" if self._pair_lca_at_mroot(p, q, left, right, mode) \
                    else "satisfied"
            ins = {m for m, i in zip(tf.members, inside) if i}
            return "pending" if ins == {p, q} else "violated"
        # fan
        if k == 3:
            same = None
            for a, b in ((tf.members[0], tf.members[1]),
                         (tf.members[0], tf.members[2]),
                         (tf.members[1], tf.members[2])):
                if self.root_of_doc[a] == self.root_of_doc[b]:
                    same = (a, b)
                    break
            if same is None:
                return "violated"
            return "satisfied" if self._pair_lca_at_mroot(*same, left, right, mode) \
                else "violated"
        x, y = [m for m, i in zip(tf.members, inside) if i]
        return "pending" if self._pair_lca_at_mroot(x, y, left, right, mode) \
            else "violated"

    def _affected_cids(self, left: int, right: int) -> list[int]:
        ci = self.tree_counts.get(left, {})
        cj = self.tree_counts.get(right, {})
        out = []
        small, big = (ci, cj) if len(ci) <= len(cj) else (cj, ci)
        for cid, cnt in small.items():
            if cid not in self.pending:
                continue
            if cnt >= 2 or big.get(cid, 0) >= 1:
                out.append(cid)
        for cid, cnt in big.items():
            if cnt >= 2 and cid in self.pending and cid not in small:
                out.append(cid)
        return out

    def count_new_violations(self, left: int, right: int, mode: str) -> int:
        v = 0
        for cid in self._affected_cids(left, right):
            if self._post_merge_status(self.pending[cid], left, right, mode) == "violated":
                v += 1
        return v

    # ----- candidate management -----

    def _push_candidate(self, left: int, right: int, mode: str, llr: float):
        v = self.count_new_violations(left, right, mode) if self.pending else 0
        total = llr - self.lam * v
        ti, tj = self.trees[left], self.trees[right]
        heapq.heappush(self._heap,
                       (-total, ti.cidx, tj.cidx, _MODE_RANK[mode],
                        left, right, mode, llr, v))

    def _score_and_push(self, left: int, right: int):
        self._score_pairs([(left, right)])

    def _push_modes(self, left: int, right: int, ti: _ActiveTree,
                    tj: _ActiveTree, logf: float):
        base = ti.log_ev + tj.log_ev
        for mode in self._valid_modes(ti, tj):
            arity, childsum = self._mode_params(ti, tj, mode)
            llr = self._log_p_merged(logf, childsum, arity) - base
            self._push_candidate(left, right, mode, llr)

    def _score_pairs(self, pairs):
        """Score every not-yet-scored pair and push all of its merge modes.

        A pair's scores never go stale while both operands are alive, so each
        pair is scored at most once over the whole run.
        """
        todo = []
        for left, right in pairs:
            ti, tj = self.trees[left], self.trees[right]
            if ti.cidx > tj.cidx:
                left, right, ti, tj = right, left, tj, ti
            if (left, right) in self._scored:
                continue
            self._scored.add((left, right))
            todo.append((left, right, ti, tj))
        # Chunk by total entry count so memory stays bounded.
        chunk, load = [], 0
        for item in todo:
            chunk.append(item)
            load += len(item[2].ind) + len(item[3].ind)
            if load > 2 * 10**6:
                self._score_chunk(chunk)
                chunk, load = [], 0
        if chunk:
            self._score_chunk(chunk)

    def _score_chunk(self, todo):
        """One vectorized likelihood pass over many candidate pairs.

        Entries of all pairs are concatenated and pooled counts are looked up
        with pair-offset keys, so the whole chunk costs a constant number of
        numpy calls.
        """
        from scipy.special import gammaln
        p = self.params
        w = p.vocab_size
        stride = self._X.shape[1] + 1
        ent_idx, ent_dat, ent_key, ent_row = [], [], [], []
        lengths, row_pair = [], []
        pool_a_key, pool_a_val, pool_b_key, pool_b_val = [], [], [], []
        pool_totals = []
        row_base = 0
        for k, (_, _, ti, tj) in enumerate(todo):
            n_rows = len(ti.row_lengths) + len(tj.row_lengths)
            nnz = np.concatenate([ti.nnz_per_row, tj.nnz_per_row])
            ent_idx.extend((ti.ind, tj.ind))
            ent_dat.extend((ti.dat, tj.dat))
            base = k * stride
            ent_key.extend((base + ti.ind, base + tj.ind))
            ent_row.append(np.repeat(np.arange(row_base, row_base + n_rows), nnz))
            lengths.extend((ti.row_lengths, tj.row_lengths))
            row_pair.append(np.full(n_rows, k))
            pool_a_key.append(base + ti.pool_idx)
            pool_a_val.append(ti.pool_val)
            pool_b_key.append(base + tj.pool_idx)
            pool_b_val.append(tj.pool_val)
            pool_totals.append(float(ti.pool_val.sum()) + float(tj.pool_val.sum()))
            row_base += n_rows

        keys = np.concatenate(ent_key)
        data = np.concatenate(ent_dat)
        row_of = np.concatenate(ent_row)
        L = np.concatenate(lengths)
        pair_of_row = np.concatenate(row_pair)

        def lookup(pkey, pval):
            kidx = np.concatenate(pkey)
            kval = np.concatenate(pval)
            if len(kidx) == 0 or len(keys) == 0:
                return np.zeros(len(keys))
            pos = np.searchsorted(kidx, keys)
            pos = np.clip(pos, 0, len(kidx) - 1)
            hit = kidx[pos] == keys
            out = np.zeros(len(keys))
            out[hit] = kval[pos[hit]]
            return out

        pw = lookup(pool_a_key, pool_a_val) + lookup(pool_b_key, pool_b_val)
        ptot = np.asarray(pool_totals)[pair_of_row]
        if p.conditioning == "loo":
            rest_total = ptot - L
            rest_w = pw - data
        else:
            rest_total = ptot
            rest_w = pw
        big_a = np.where(rest_total > 0, p.alpha * w + p.kappa, p.alpha * w)
        row_term = gammaln(big_a) - gammaln(big_a + L)
        denom = rest_total[row_of]
        safe = denom > 0
        aw = np.full(len(data), p.alpha)
        aw[safe] += p.kappa * rest_w[safe] / denom[safe]
        per_entry = gammaln(aw + data) - gammaln(aw)
        logf = np.bincount(pair_of_row, weights=row_term, minlength=len(todo))
        logf += np.bincount(pair_of_row[row_of], weights=per_entry,
                            minlength=len(todo))
        for k, (left, right, ti, tj) in enumerate(todo):
            self._push_modes(left, right, ti, tj, float(logf[k]))

    def _init_candidates(self):
        roots = sorted(self.alive, key=lambda r: self.trees[r].cidx)
        if len(roots) < 2:
            return
        if self.config.approx and len(roots) > self.config.approx_neighbors + 1:
            self._refresh_neighbors()
            pairs = set()
            for r in roots:
                for nb in self._neighbors.get(r, []):
                    a, b = (r, nb) if self.trees[r].cidx < self.trees[nb].cidx else (nb, r)
                    pairs.add((a, b))
            pairs = sorted(pairs, key=lambda p: (self.trees[p[0]].cidx,
                                                 self.trees[p[1]].cidx))
        else:
            pairs = [(roots[i], roots[j]) for i in range(len(roots))
                     for j in range(i + 1, len(roots))]
        self._batch_singleton_joins(pairs)

    def _batch_singleton_joins(self, pairs):
        """Vectorized join scores for singleton-singleton pairs."""
        if not pairs:
            return
        from scipy.special import gammaln
        p = self.params
        X = self._X
        rows_a = np.array([self.trees[a].rows[0] for a, _ in pairs])
        rows_b = np.array([self.trees[b].rows[0] for _, b in pairs])
        lengths = self.corpus.lengths

        def directed(rows_s, rows_c):
            # log DCM of each scored row given the conditioning row's counts.
            sub_ptr = X.indptr
            nnz = sub_ptr[rows_s + 1] - sub_ptr[rows_s]
            ent_pair = np.repeat(np.arange(len(rows_s)), nnz)
            ent_idx = np.concatenate([X.indices[sub_ptr[r]:sub_ptr[r + 1]]
                                      for r in rows_s]) if len(rows_s) else np.array([], dtype=np.int64)
            ent_dat = np.concatenate([X.data[sub_ptr[r]:sub_ptr[r + 1]]
                                      for r in rows_s]) if len(rows_s) else np.array([])
            if p.conditioning == "loo":
                cond_counts = self._lookup(rows_c[ent_pair], ent_idx)
                cond_tot = lengths[rows_c]
            else:
                cond_counts = self._lookup(rows_c[ent_pair], ent_idx) + ent_dat
                cond_tot = lengths[rows_c] + lengths[rows_s]
            w = p.vocab_size
            big_a = np.where(cond_tot > 0, p.alpha * w + p.kappa, p.alpha * w)
            out = gammaln(big_a) - gammaln(big_a + lengths[rows_s])
            denom = cond_tot[ent_pair]
            aw = np.full(len(ent_idx), p.alpha)
            ok = denom > 0
            aw[ok] += p.kappa * cond_counts[ok] / denom[ok]
            per_entry = gammaln(aw + ent_dat) - gammaln(aw)
            out += np.bincount(ent_pair, weights=per_entry, minlength=len(rows_s))
            return out

        logf = directed(rows_a, rows_b) + directed(rows_b, rows_a)
        fa = np.array([self.trees[a].log_ev for a, _ in pairs])
        fb = np.array([self.trees[b].log_ev for _, b in pairs])
        pi0 = self.config.pi0
        logp = np.logaddexp(math.log(pi0) + logf, math.log1p(-pi0) + fa + fb)
        llrs = logp - fa - fb
        for (a, b), llr in zip(pairs, llrs):
            self._push_candidate(a, b, "join", float(llr))

    def _lookup(self, rows, terms):
        if self._dense is not None:
            return self._dense[rows, terms]
        out = np.zeros(len(rows))
        X = self._X
        for i, (r, t) in enumerate(zip(rows, terms)):
            s, e = X.indptr[r], X.indptr[r + 1]
            j = np.searchsorted(X.indices[s:e], t)
            if j < e - s and X.indices[s + j] == t:
                out[i] = X.data[s + j]
        return out

    # ----- neighbor pruning (approx mode) -----

    def _centroid_matrix(self, roots):
        import scipy.sparse as sp
        indptr = [0]
        indices, data = [], []
        for r in roots:
            t = self.trees[r]
            norm = np.linalg.norm(t.pool_val)
            indices.extend(t.pool_idx.tolist())
            data.extend((t.pool_val / norm if norm > 0 else t.pool_val).tolist())
            indptr.append(len(indices))
        return sp.csr_matrix((np.array(data), np.array(indices, dtype=np.int64),
                              np.array(indptr, dtype=np.int64)),
                             shape=(len(roots), self._X.shape[1]))

    def _refresh_neighbors(self):
        roots = sorted(self.alive, key=lambda r: self.trees[r].cidx)
        k = self.config.approx_neighbors
        M = self._centroid_matrix(roots)
        self._neighbors = {}
        chunk = max(1, min(len(roots), 512))
        for s in range(0, len(roots), chunk):
            block = np.asarray((M[s:s + chunk] @ M.T).todense())
            for bi in range(block.shape[0]):
                block[bi, s + bi] = -np.inf
                order = np.argsort(-block[bi], kind="stable")[:k]
                self._neighbors[roots[s + bi]] = [roots[j] for j in order
                                                  if block[bi, j] > -np.inf]

    def _neighbors_for_new(self, m: int, left: int, right: int):
        cands = set()
        for src in (left, right):
            cands.update(self._neighbors.get(src, []))
        cands.discard(left)
        cands.discard(right)
        cands.discard(m)
        cands &= self.alive
        tm = self.trees[m]
        norm_m = np.linalg.norm(tm.pool_val)
        scored = []
        for r in cands:
            tr = self.trees[r]
            if len(tm.pool_idx) == 0 or len(tr.pool_idx) == 0:
                scored.append((0.0, tr.cidx, r))
                continue
            pos = np.searchsorted(tm.pool_idx, tr.pool_idx)
            pos = np.clip(pos, 0, len(tm.pool_idx) - 1)
            match = tm.pool_idx[pos] == tr.pool_idx
            dot = float(np.sum(tm.pool_val[pos[match]] * tr.pool_val[match]))
            nr = np.linalg.norm(tr.pool_val)
            cos = dot / (norm_m * nr) if norm_m > 0 and nr > 0 else 0.0
            scored.append((-cos, tr.cidx, r))
        scored.sort()
        self._neighbors[m] = [r for _, _, r in scored[:self.config.approx_neighbors]]

    # ----- merging -----

    def pop_best(self) -> MergeCandidate | None:
        while self._heap:
            (_, _, _, _, left, right, mode, llr, v) = heapq.heappop(self._heap)
            if left in self.alive and right in self.alive:
                return MergeCandidate(left=left, right=right, mode=mode,
                                      log_likelihood_ratio=llr, violations=v,
                                      lam=self.lam)
        return None

    def apply_merge(self, cand: MergeCandidate) -> int:
        left, right, mode = cand.left, cand.right, cand.mode
        ti, tj = self.trees[left], self.trees[right]
        tree = self.tree

        # Settle constraints before touching the arena: the satisfiability
        # predicates read the pre-merge structure.
        newly_violated = 0
        settled: list[int] = []
        if self.pending:
            for cid in self._affected_cids(left, right):
                status = self._post_merge_status(self.pending[cid], left, right, mode)
                if status == "violated":
                    newly_violated += 1
                    settled.append(cid)
                elif status == "satisfied":
                    settled.append(cid)
        self.violations_total += newly_violated

        node = tree.new_node(label="")
        if mode == "join":
            children = [left, right]
        elif mode == "absorb-left":
            children = list(tree.nodes[left].children) + [right]
        elif mode == "absorb-right":
            children = list(tree.nodes[right].children) + [left]
        else:  # collapse
            children = list(tree.nodes[left].children) + list(tree.nodes[right].children)
        node.children = children
        for c in children:
            tree.nodes[c].parent = node.id
        node.stats = ClusterStats.merged(tree.nodes[left].stats, tree.nodes[right].stats)
        node.provenance = {
            "mode": mode,
            "log_likelihood_ratio": cand.log_likelihood_ratio,
            "violations": cand.violations,
            "log_posterior_ratio": cand.log_posterior_ratio,
            "order": self._merges_done,
        }

        logf, pieces = self._pair_log_f(ti, tj)
        arity, childsum = self._mode_params(ti, tj, mode)
        log_ev = self._log_p_merged(logf, childsum, arity)
        ind, dat, row_lengths, nnz, pool_idx, pool_val = pieces
        merged = _ActiveTree(
            root=node.id, cidx=len(self.trees), rows=np.concatenate([ti.rows, tj.rows]),
            ind=ind, dat=dat, row_lengths=row_lengths,
            pool_idx=pool_idx, pool_val=pool_val,
            log_ev=log_ev, childsum=childsum, nch=len(children),
            doc_ids=ti.doc_ids + tj.doc_ids, nnz_per_row=nnz)

        self.trees[node.id] = merged
        self.alive.discard(left)
        self.alive.discard(right)
        self.alive.add(node.id)
        for d in merged.doc_ids:
            self.root_of_doc[d] = node.id
        counts = {}
        for src in (left, right):
            for cid, c in self.tree_counts.pop(src, {}).items():
                if cid in self.pending:
                    counts[cid] = counts.get(cid, 0) + c
        for cid in settled:
            del self.pending[cid]
            counts.pop(cid, None)
        self.tree_counts[node.id] = counts

        self._merges_done += 1
        if self.config.approx and len(self.alive) > self.config.approx_neighbors + 1:
            if self._merges_done % self.config.approx_refresh == 0:
                self._refresh_neighbors()
                self._regenerate_all_candidates()
            else:
                self._neighbors_for_new(node.id, left, right)
                self._score_pairs([(node.id, r)
                                   for r in self._neighbors[node.id]])
        else:
            self._score_pairs([(node.id, r)
                               for r in sorted(self.alive - {node.id},
                                               key=lambda r: self.trees[r].cidx)])
        return node.id

    def _regenerate_all_candidates(self):
        # Existing heap entries stay valid; only newly discovered neighbor
        # pairs need scores.
        pairs = []
        for r in sorted(self.alive, key=lambda t: self.trees[t].cidx):
            for nb in self._neighbors.get(r, []):
                if nb in self.alive:
                    pairs.append((r, nb))
        self._score_pairs(pairs)

    def ensure_candidates(self):
        """Fallback when pruning starves the heap: score all remaining pairs."""
        roots = sorted(self.alive, key=lambda r: self.trees[r].cidx)
        self._score_pairs([(roots[i], roots[j])
                           for i in range(len(roots))
                           for j in range(i + 1, len(roots))])


def cluster(corpus: Corpus, constraints: list[TripleFan] | None = None,
            lam: float = 0.0, params: DcmParams | None = None,
            config: BrtConfig = BrtConfig(), doc_ids: list[str] | None = None,
            progress_cb=None, cancel_event=None) -> RoseTree:
    """Constrained greedy agglomeration; lam = 0 is plain rose tree clustering."""
    if params is None:
        params = DcmParams(vocab_size=max(1, corpus.vocab.size))
    state = ForestState(corpus, params, config, lam=lam,
                        constraints=constraints, doc_ids=doc_ids)
    total = len(state.alive) - 1
    partial = False
    while len(state.alive) > 1:
        if cancel_event is not None and cancel_event.is_set():
            partial = True
            break
        cand = state.pop_best()
        if cand is None:
            state.ensure_candidates()
            cand = state.pop_best()
            if cand is None:
                break
        state.apply_merge(cand)
        if progress_cb is not None:
            progress_cb(state._merges_done, total)
    roots = sorted(state.alive, key=lambda r: state.trees[r].cidx)
    tree = state.tree
    if len(roots) == 1:
        tree.root = roots[0]
    else:
        node = tree.new_node(label="(partial)")
        node.children = list(roots)
        stats = state.tree.nodes[roots[0]].stats
        for r in roots[1:]:
            stats = ClusterStats.merged(stats, tree.nodes[r].stats)
        node.stats = stats
        node.provenance = {"mode": "partial", "log_likelihood_ratio": 0.0,
                           "violations": 0, "log_posterior_ratio": 0.0,
                           "order": state._merges_done, "partial": True}
        for r in roots:
            tree.nodes[r].parent = node.id
        tree.root = node.id
        partial = True
    if partial:
        tree.nodes[tree.root].provenance = dict(tree.nodes[tree.root].provenance or {})
        tree.nodes[tree.root].provenance["partial"] = True
    return tree


def rebuild_subtree(tree: RoseTree, node_id: int, corpus: Corpus,
                    params: DcmParams | None = None,
                    config: BrtConfig = BrtConfig()) -> RoseTree:
    """Re-cluster the documents under ``node_id`` without constraints.

    The rest of the tree is untouched; the subtree root keeps its node id.
    """
    if node_id not in tree.nodes:
        raise NodeNotFound(str(node_id))
    docs = tree.docs_under(node_id)
    if len(docs) < 2:
        raise TooFewDocuments(f"node {node_id} has {len(docs)} document(s)")
    sub = cluster(corpus, lam=0.0, params=params, config=config, doc_ids=sorted(docs))
    out = tree.clone()
    target = out.nodes[node_id]
    # Drop the old subtree's interior nodes (ids stay retired).
    for nid in out.subtree_nodes(node_id):
        if nid != node_id:
            out.nodes.pop(nid, None)

    id_map: dict[int, int] = {sub.root: node_id}

    def graft(src_id: int, dst_id: int):
        src = sub.nodes[src_id]
        dst = out.nodes[dst_id]
        dst.label = src.label if dst_id != node_id else dst.label
        dst.docs = list(src.docs)
        dst.stats = src.stats
        dst.provenance = src.provenance
        dst.children = []
        for c in src.children:
            child = out.new_node(label=sub.nodes[c].label)
            child.parent = dst_id
            dst.children.append(child.id)
            id_map[c] = child.id
            graft(c, child.id)

    graft(sub.root, node_id)
    target.uncertainty = None
    return out
