"""Per-node uncertainty: model surrogate, cross-tree entropy, subsethood."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, EmbeddingStore, TfIdfModel, doc_vectors_matrix
from .errors import MissingProvenance
from .rosetree import RoseTree

WEIGHTS = (1.0, 3.0, 4.0)  # model, knowledge, structure


@dataclass(frozen=True)
class UncertaintyScore:
    model: float
    knowledge: float
    structure: float
    overall: float

    def as_dict(self) -> dict:
        return {"model": self.model, "knowledge": self.knowledge,
                "structure": self.structure, "overall": self.overall}


@dataclass(frozen=True)
class UncertaintyConfig:
    dispersion_combine: str = "avg"  # "avg" | "max"

    def __post_init__(self):
        assert self.dispersion_combine in ("avg", "max")


def model_uncertainty(tree: RoseTree) -> dict[int, float]:
    """Negated creation-merge log posterior ratio, min-max normalized over the
    internal nodes; leaves score 0. Degenerate spreads map to 0.5."""
    raw: dict[int, float] = {}
    out: dict[int, float] = {}
    for nid in tree.subtree_nodes(tree.root):
        node = tree.nodes[nid]
        if node.is_leaf:
            out[nid] = 0.0
            continue
        prov = node.provenance or {}
        if "log_posterior_ratio" not in prov:
            raise MissingProvenance(f"node {nid} has no merge record")
        raw[nid] = -float(prov["log_posterior_ratio"])
    if raw:
        lo, hi = min(raw.values()), max(raw.values())
        for nid, r in raw.items():
            out[nid] = 0.5 if hi == lo else (r - lo) / (hi - lo)
    return out


def _entropy(props: list[float], m: int) -> float:
    h = -sum(p * math.log(p) for p in props if p > 0)
    return h / math.log(max(2, m))


class _TreeView:
    """Depth/leaf lookups for entropy, restricted to a shared doc set."""

    def __init__(self, tree: RoseTree, shared: set[str]):
        self.tree = tree
        self.depths = tree.depths()
        self.leaf_of = {d: l for d, l in tree.leaf_of_doc().items() if d in shared}
        self.shared_under: dict[int, list[str]] = {}
        for nid in tree.subtree_nodes(tree.root):
            self.shared_under[nid] = [d for d in tree.docs_under(nid)
                                      if d in self.leaf_of]

    def ancestor_at(self, doc: str, level: int) -> int:
        nid = self.leaf_of[doc]
        while self.depths[nid] > level:
            nid = self.tree.nodes[nid].parent
        return nid


def _forward(view_a: _TreeView, view_b: _TreeView,
             nid: int) -> tuple[float, list[int]]:
    """Normalized entropy of nid's shared docs over level-matched targets in
    the other tree, plus the distinct target list."""
    docs = view_a.shared_under[nid]
    if not docs:
        return 0.0, []
    level = view_a.depths[nid]
    counts: dict[int, int] = {}
    for d in docs:
        t = view_b.ancestor_at(d, level)
        counts[t] = counts.get(t, 0) + 1
    total = len(docs)
    h = _entropy([c / total for c in counts.values()], len(counts))
    return h, sorted(counts)


def knowledge_uncertainty(clustering_tree: RoseTree, constraint_tree: RoseTree,
                          config: UncertaintyConfig = UncertaintyConfig()
                          ) -> dict[int, float]:
    """Cross-tree dispersion entropy for every clustering-tree node.

    A node's forward entropy measures how its constrained docs scatter over
    the constraint tree at the matching level; that is combined with the mean
    backward entropy of the constraint nodes its docs map to.
    """
    shared = set(clustering_tree.doc_ids()) & set(constraint_tree.doc_ids())
    va = _TreeView(clustering_tree, shared)
    vb = _TreeView(constraint_tree, shared)
    back_cache: dict[int, float] = {}
    out: dict[int, float] = {}
    for nid in clustering_tree.subtree_nodes(clustering_tree.root):
        fwd, targets = _forward(va, vb, nid)
        if not targets:
            out[nid] = 0.0
            continue
        backs = []
        for t in targets:
            if t not in back_cache:
                back_cache[t] = _forward(vb, va, t)[0]
            backs.append(back_cache[t])
        back = sum(backs) / len(backs)
        if config.dispersion_combine == "max":
            out[nid] = max(fwd, back)
        else:
            out[nid] = (fwd + back) / 2.0
    return out


def subsethood(mu_child: np.ndarray, mu_parent: np.ndarray) -> float:
    """Degree to which the child membership is contained in the parent's.

    Empty child membership is fully contained by convention.
    """
    denom = float(mu_child.sum())
    if denom <= 0:
        return 1.0
    return float(np.minimum(mu_child, mu_parent).sum()) / denom


def membership_matrix(tree: RoseTree, corpus: Corpus,
                      store: EmbeddingStore | None = None,
                      vectors: np.ndarray | None = None
                      ) -> tuple[dict[int, np.ndarray], dict[int, list[int]]]:
    """mu_v over all corpus docs per node, and per-node member doc rows.

    mu_v(d) = max(0, cosine(doc_vector(d), node centroid)).
    """
    if vectors is None:
        vectors = doc_vectors_matrix(corpus, store, TfIdfModel(corpus))
    mus: dict[int, np.ndarray] = {}
    members: dict[int, list[int]] = {}
    n = vectors.shape[0]
    for nid in tree.subtree_nodes(tree.root):
        rows = [corpus.index_of[d] for d in tree.docs_under(nid)
                if d in corpus.index_of]
        members[nid] = rows
        if not rows:
            mus[nid] = np.zeros(n)
            continue
        center = vectors[rows].mean(axis=0)
        norm = np.linalg.norm(center)
        if norm == 0:
            mus[nid] = np.zeros(n)
            continue
        mus[nid] = np.maximum(0.0, vectors @ (center / norm))
    return mus, members


def structure_uncertainty(tree: RoseTree, corpus: Corpus,
                          store: EmbeddingStore | None = None,
                          vectors: np.ndarray | None = None) -> dict[int, float]:
    """1 - subsethood of each node's membership in its parent's, evaluated
    over the corpus docs under the parent. The root scores 0."""
    mus, members = membership_matrix(tree, corpus, store, vectors)
    out: dict[int, float] = {tree.root: 0.0}
    for nid in tree.subtree_nodes(tree.root):
        node = tree.nodes[nid]
        if node.parent is None:
            continue
        rows = members[node.parent]
        if not rows:
            out[nid] = 0.0
            continue
        idx = np.array(rows)
        out[nid] = 1.0 - subsethood(mus[nid][idx], mus[node.parent][idx])
    return out


def aggregate(model: dict[int, float], knowledge: dict[int, float],
              structure: dict[int, float]) -> dict[int, UncertaintyScore]:
    """Weighted (1, 3, 4)/8 combination of the three factor maps."""
    wm, wk, ws = WEIGHTS
    out = {}
    for nid in model:
        m, k, s = model[nid], knowledge[nid], structure[nid]
        overall = (wm * m + wk * k + ws * s) / sum(WEIGHTS)
        out[nid] = UncertaintyScore(model=m, knowledge=k, structure=s,
                                    overall=overall)
    return out


def score_tree(clustering_tree: RoseTree, constraint_tree: RoseTree | None,
               corpus: Corpus, store: EmbeddingStore | None = None,
               config: UncertaintyConfig = UncertaintyConfig(),
               model: dict[int, float] | None = None,
               annotate: bool = True) -> dict[int, UncertaintyScore]:
    """All three factors plus the aggregate; optionally stamps the tree."""
    if model is None:
        model = model_uncertainty(clustering_tree)
    nids = clustering_tree.subtree_nodes(clustering_tree.root)
    if constraint_tree is not None:
        knowledge = knowledge_uncertainty(clustering_tree, constraint_tree, config)
    else:
        knowledge = {nid: 0.0 for nid in nids}
    structure = structure_uncertainty(clustering_tree, corpus, store)
    scores = aggregate(model, knowledge, structure)
    if annotate:
        for nid, sc in scores.items():
            clustering_tree.nodes[nid].uncertainty = sc.as_dict()
    return scores
