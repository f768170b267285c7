"""Constraint-tree extraction: document projection, ant colony optimization
over the knowledge-base DAG, and beam-search pruning."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, EmbeddingStore, TfIdfModel, doc_vector
from .dcm import DcmParams, log_dcm_docs_vs_node
from .errors import EmptyKb, NoProjectedDocuments
from .kb import SUPER_ROOT, KnowledgeBase, build_inverted_index
from .rosetree import RoseTree


@dataclass(frozen=True)
class ExtractConfig:
    K: int = 50                 # retrieved KB docs per corpus doc
    q: float = 0.10             # kept fraction of scored pairs
    rho: float = 0.9            # pheromone evaporation
    gamma: float | None = None  # depth penalty; None = auto by KB depth
    k_beam: int = 20
    iters: int = 30
    min_ants: int | None = None
    seed: int = 0
    conv_tol: float = 1e-4
    accuracy_floor: float = 50.0  # pruned nodes score -floor * L_d per doc
    alpha: float = 0.01
    kappa: float = 100.0


@dataclass
class Ant:
    source_doc: str      # corpus document id
    source_row: int      # corpus matrix row
    kb_doc: int          # KB doc index the pair matched
    node: str            # attachment node in the KB
    score: float         # pair cosine similarity
    walk: list[str] = field(default_factory=list)


@dataclass
class ExtractionResult:
    tree: RoseTree
    coverage: float
    num_ants: int
    iterations: int
    gamma: float
    seed: int


class PheromoneTable:
    """Per-edge pheromone with per-node parent transition distributions."""

    def __init__(self, kb: KnowledgeBase):
        self.kb = kb
        self.tau: dict[tuple[str, str], float] = {}
        for nid, node in kb.nodes.items():
            for p in node.parents:
                self.tau[(nid, p)] = 1.0
        self.iteration = 0

    def transition_probs(self, u: str) -> list[tuple[str, float]]:
        parents = self.kb.nodes[u].parents
        taus = [self.tau[(u, p)] for p in parents]
        total = sum(taus)
        return [(p, t / total) for p, t in zip(parents, taus)]

    def all_probs(self) -> dict[tuple[str, str], float]:
        out = {}
        for nid in self.kb.nodes:
            for p, pr in self.transition_probs(nid):
                out[(nid, p)] = pr
        return out

    def best_parent(self, u: str) -> str | None:
        parents = self.kb.nodes[u].parents
        if not parents:
            return None
        return max(sorted(parents), key=lambda p: self.tau[(u, p)])


def project(corpus: Corpus, kb: KnowledgeBase, K: int = 50, q: float = 0.10,
            store: EmbeddingStore | None = None,
            tfidf: TfIdfModel | None = None) -> list[Ant]:
    """Map corpus docs onto KB docs: retrieve K per doc by term overlap, score
    all pairs by cosine similarity, keep the global top q fraction."""
    if not kb.docs:
        raise EmptyKb("knowledge base has no reference documents")
    if tfidf is None:
        tfidf = TfIdfModel(corpus)
    index = build_inverted_index(kb)
    kb_vecs = [doc_vector(d, store, tfidf) if d.length else None for d in kb.docs]
    pairs: list[tuple[float, int, int]] = []  # (cos, corpus row, kb doc)
    for row, doc in enumerate(corpus.docs):
        if doc.length == 0:
            continue
        overlap: dict[int, int] = {}
        for tid in doc.counts:
            for di in index.get(tid, ()):
                overlap[di] = overlap.get(di, 0) + 1
        if not overlap:
            continue
        top = sorted(overlap, key=lambda di: (-overlap[di], di))[:K]
        dv = doc_vector(doc, store, tfidf)
        for di in top:
            kv = kb_vecs[di]
            if kv is None or len(kv) != len(dv):
                continue
            pairs.append((float(np.dot(dv, kv)), row, di))
    if not pairs:
        raise NoProjectedDocuments("no corpus document matched any KB document")
    keep = min(len(pairs), max(1, math.ceil(q * len(pairs))))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    ants = []
    for cos, row, di in pairs[:keep]:
        ants.append(Ant(source_doc=corpus.docs[row].id, source_row=row,
                        kb_doc=di, node=kb.doc_node[di], score=cos))
    return ants


class AccuracyCache:
    """Lazily computed log f_DCM(d, v) for all corpus docs against KB nodes.

    Nodes pruned away by beam search are frozen at -floor * L_d.
    """

    def __init__(self, corpus: Corpus, kb: KnowledgeBase, params: DcmParams,
                 survivors: set[str] | None, floor: float):
        self.corpus = corpus
        self.kb = kb
        self.params = params
        self.survivors = survivors
        self.floor = floor
        self._cache: dict[str, np.ndarray] = {}
        self._rows = np.arange(len(corpus.docs))

    def log_f(self, node_id: str) -> np.ndarray:
        vec = self._cache.get(node_id)
        if vec is None:
            if self.survivors is not None and node_id not in self.survivors:
                vec = -self.floor * self.corpus.lengths
            else:
                idx, val = self.kb.node_profile(node_id)
                vec = log_dcm_docs_vs_node(self.corpus.matrix, self._rows,
                                           self.corpus.lengths, idx, val,
                                           self.params)
            self._cache[node_id] = vec
        return vec


def walk_quality(walk: list[str], source_row: int, kb: KnowledgeBase,
                 edge_counts: dict[tuple[str, str], int], visited: set[str],
                 gamma: float, acc: AccuracyCache) -> tuple[float, float, float]:
    """Accuracy A, coverage R, and structure simplicity S of one ant's walk."""
    length = len(walk) - 1
    denom = sum(float(acc.log_f(v)[source_row]) for v in walk)
    a = 0.0 if denom == 0 else -length / denom
    r = 1.0
    for v in walk:
        children = kb.nodes[v].children
        if not children:
            continue
        nv = len(children)
        nv_vis = sum(1 for c in children if c in visited)
        r = min(r, nv_vis / nv)
    if length == 0:
        s = 0.0
    else:
        passes = sum(edge_counts.get((walk[i], walk[i + 1]), 0)
                     for i in range(length))
        s = passes / length ** (gamma + 1)
    return a, r, s


def _edge_counts_and_visited(ants: list[Ant]):
    counts: dict[tuple[str, str], int] = {}
    visited: set[str] = set()
    for ant in ants:
        visited.update(ant.walk)
        for i in range(len(ant.walk) - 1):
            e = (ant.walk[i], ant.walk[i + 1])
            counts[e] = counts.get(e, 0) + 1
    return counts, visited


def sample_walk(start: str, table: PheromoneTable, rng: random.Random) -> list[str]:
    walk = [start]
    u = start
    while table.kb.nodes[u].parents:
        probs = table.transition_probs(u)
        x = rng.random()
        cum = 0.0
        nxt = probs[-1][0]
        for p, pr in probs:
            cum += pr
            if x < cum:
                nxt = p
                break
        walk.append(nxt)
        u = nxt
    return walk


def pheromone_step(table: PheromoneTable, ants: list[Ant], kb: KnowledgeBase,
                   rho: float, gamma: float, acc: AccuracyCache,
                   rng: random.Random) -> float:
    """One evaporation + deposit + walk-resample iteration.

    Returns the max absolute transition-probability change across edges.
    """
    assert 0.0 < rho < 1.0
    before = table.all_probs()
    counts, visited = _edge_counts_and_visited(ants)
    deposits: dict[tuple[str, str], float] = {}
    for ant in ants:
        a, r, s = walk_quality(ant.walk, ant.source_row, kb, counts, visited,
                               gamma, acc)
        ars = a * r * s
        for i in range(len(ant.walk) - 1):
            e = (ant.walk[i], ant.walk[i + 1])
            deposits[e] = deposits.get(e, 0.0) + ars
    for e in table.tau:
        table.tau[e] = rho * table.tau[e] + deposits.get(e, 0.0)
    table.iteration += 1
    for ant in ants:
        ant.walk = sample_walk(ant.node, table, rng)
    after = table.all_probs()
    return max((abs(after[e] - before[e]) for e in before), default=0.0)


def beam_prune(kb: KnowledgeBase, corpus: Corpus, k_beam: int,
               params: DcmParams) -> set[str]:
    """Top-down beam search keeping the k best-voted nodes per level."""
    if not kb.nodes:
        raise EmptyKb("empty knowledge base")
    levels = kb.levels()
    max_level = max(levels.values())
    survivors: set[str] = set(kb.roots)
    acc = AccuracyCache(corpus, kb, params, survivors=None, floor=0.0)
    for level in range(1, max_level + 1):
        cands = sorted(nid for nid, lv in levels.items()
                       if lv == level and any(p in survivors
                                              for p in kb.nodes[nid].parents))
        if not cands:
            continue
        if len(cands) <= k_beam:
            survivors.update(cands)
            continue
        lf = np.stack([acc.log_f(nid) for nid in cands])  # cands x docs
        lse = np.logaddexp.reduce(lf, axis=0)
        votes = np.exp(lf - lse).sum(axis=1)
        order = sorted(range(len(cands)), key=lambda i: (-votes[i], cands[i]))
        survivors.update(cands[i] for i in order[:k_beam])
    return survivors


def extract_constraint_tree(corpus: Corpus, kb: KnowledgeBase,
                            config: ExtractConfig = ExtractConfig(),
                            store: EmbeddingStore | None = None,
                            progress_cb=None,
                            cancel_event=None) -> ExtractionResult:
    """Full pipeline: beam pruning, projection, ACO, and tree assembly."""
    rng = random.Random(config.seed)
    params = DcmParams(alpha=config.alpha, kappa=config.kappa,
                       vocab_size=max(1, corpus.vocab.size))
    gamma = config.gamma
    if gamma is None:
        gamma = 4.0 if kb.depth() > 6 else 1.0

    ants = project(corpus, kb, K=config.K, q=config.q, store=store)
    survivors = beam_prune(kb, corpus, config.k_beam, params)
    acc = AccuracyCache(corpus, kb, params, survivors=survivors,
                        floor=config.accuracy_floor)
    table = PheromoneTable(kb)
    for ant in ants:
        ant.walk = sample_walk(ant.node, table, rng)

    iterations = 0
    for it in range(config.iters):
        if cancel_event is not None and cancel_event.is_set():
            break
        delta = pheromone_step(table, ants, kb, config.rho, gamma, acc, rng)
        iterations = it + 1
        if progress_cb is not None:
            progress_cb(iterations, config.iters)
        if delta < config.conv_tol:
            break

    # Commit every ant to its maximum-probability walk. The argmax parent is
    # shared per node, so the union of committed walks is a tree.
    best_parent: dict[str, str | None] = {}

    def committed_walk(start: str) -> list[str]:
        walk = [start]
        u = start
        while True:
            if u not in best_parent:
                best_parent[u] = table.best_parent(u)
            p = best_parent[u]
            if p is None:
                return walk
            walk.append(p)
            u = p

    for ant in ants:
        ant.walk = committed_walk(ant.node)

    # One attachment per source document: its highest-scoring pair wins.
    chosen: dict[str, Ant] = {}
    for ant in ants:
        cur = chosen.get(ant.source_doc)
        if cur is None or (ant.score, -ant.kb_doc) > (cur.score, -cur.kb_doc):
            chosen[ant.source_doc] = ant

    ant_count: dict[str, int] = {}
    tree_parent: dict[str, str | None] = {}
    for ant in ants:
        for i, nid in enumerate(ant.walk):
            ant_count[nid] = ant_count.get(nid, 0) + 1
            tree_parent[nid] = ant.walk[i + 1] if i + 1 < len(ant.walk) else None

    root = next(nid for nid, p in tree_parent.items() if p is None)
    min_ants = config.min_ants
    if min_ants is None:
        min_ants = max(3, math.ceil(0.005 * len(ants)))

    # Contract sparse nodes into their parents (the root always survives).
    surviving = {nid for nid, c in ant_count.items()
                 if c >= min_ants or nid == root}

    def surviving_ancestor(nid: str) -> str:
        while nid not in surviving:
            nid = tree_parent[nid]
        return nid

    children: dict[str, list[str]] = {nid: [] for nid in surviving}
    for nid in sorted(surviving):
        if nid == root:
            continue
        p = surviving_ancestor(tree_parent[nid])
        children[p].append(nid)

    attach: dict[str, list[str]] = {nid: [] for nid in surviving}
    for doc_id in sorted(chosen):
        attach[surviving_ancestor(chosen[doc_id].node)].append(doc_id)

    # Contract single-child chains without docs; drop the virtual super-root.
    def contracted_root(nid: str) -> str:
        while len(children[nid]) == 1 and not attach[nid]:
            nid = children[nid][0]
        return nid

    out = RoseTree()

    def build(nid: str) -> int:
        node = out.new_node(label=kb.nodes[nid].name if nid != SUPER_ROOT else "root",
                            kb_ref=None if nid == SUPER_ROOT else nid)
        for doc_id in attach[nid]:
            leaf = out.new_node(label=doc_id, docs=[doc_id])
            out.attach(node.id, leaf.id)
        for c in sorted(children[nid]):
            cid = build(contracted_root(c))
            out.attach(node.id, cid)
        return node.id

    out.root = build(contracted_root(root))
    coverage = len(chosen) / max(1, len(corpus))
    return ExtractionResult(tree=out, coverage=coverage, num_ants=len(ants),
                            iterations=iterations, gamma=gamma, seed=config.seed)
