"""Evaluation metrics and the synthetic corpus/KB benchmark generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, build_corpus
from .errors import TooFewSharedDocs
from .kb import KnowledgeBase, parse_kb
from .rosetree import RoseTree


def triple_fan_accuracy(candidate: RoseTree, truth: RoseTree,
                        cap: int = 200_000, seed: int = 0) -> float:
    """Fraction of truth triplets whose kind (and bonded pair, for triples)
    the candidate reproduces, over the shared document set."""
    shared = sorted(set(candidate.doc_ids()) & set(truth.doc_ids()))
    if len(shared) < 3:
        raise TooFewSharedDocs(f"{len(shared)} shared docs, need at least 3")
    dec = truth.decompose(cap=cap, seed=seed, docs=shared)
    if not dec.items:
        raise TooFewSharedDocs("no triplets to compare")
    ctx = (candidate.leaf_of_doc(), candidate.depths())
    good = 0
    for item in dec.items:
        got = candidate.classify_triplet(*item.members, _ctx=ctx)
        if got.kind == item.kind and (item.kind == "fan" or got.pair == item.pair):
            good += 1
    return good / len(dec.items)


def _layer_labels(tree: RoseTree, docs: list[str], level: int) -> list[int]:
    leaf_of = tree.leaf_of_doc()
    depths = tree.depths()
    labels = []
    for d in docs:
        nid = leaf_of[d]
        while depths[nid] > level:
            nid = tree.nodes[nid].parent
        labels.append(nid)
    return labels


def nmi(labels_a: list, labels_b: list) -> float:
    """2 I(X;Y) / (H(X) + H(Y)) with natural logs; 1 when both are single
    clusters."""
    n = len(labels_a)
    assert n == len(labels_b) and n > 0
    ca: dict = {}
    cb: dict = {}
    cab: dict = {}
    for a, b in zip(labels_a, labels_b):
        ca[a] = ca.get(a, 0) + 1
        cb[b] = cb.get(b, 0) + 1
        cab[(a, b)] = cab.get((a, b), 0) + 1
    ha = -sum(c / n * math.log(c / n) for c in ca.values())
    hb = -sum(c / n * math.log(c / n) for c in cb.values())
    if ha == 0 and hb == 0:
        return 1.0
    mi = 0.0
    for (a, b), c in cab.items():
        p = c / n
        mi += p * math.log(p * n * n / (ca[a] * cb[b]))
    return max(0.0, 2.0 * mi / (ha + hb))


def layer_nmis(candidate: RoseTree, truth: RoseTree) -> list[float]:
    shared = sorted(set(candidate.doc_ids()) & set(truth.doc_ids()))
    if len(shared) < 2:
        raise TooFewSharedDocs(f"{len(shared)} shared docs, need at least 2")
    depth = min(candidate.depth(), truth.depth())
    out = []
    for level in range(1, depth + 1):
        out.append(nmi(_layer_labels(candidate, shared, level),
                       _layer_labels(truth, shared, level)))
    return out


def average_nmi(candidate: RoseTree, truth: RoseTree) -> float:
    """Mean per-layer NMI over the layers both trees have."""
    vals = layer_nmis(candidate, truth)
    return sum(vals) / len(vals) if vals else 1.0


# ----- synthetic benchmark -----


@dataclass(frozen=True)
class SynthConfig:
    branching: tuple[int, ...] = (3, 3)   # children per level, root downward
    docs_per_leaf: int = 10
    vocab: int = 500
    concentration: float = 0.1  # lower = stronger topic refinement per level
    noise: float = 0.0          # uniform-background mixing into doc topics
    doc_length: int = 60
    kb_docs_per_node: int = 2
    kb_doc_length: int = 40
    seed: int = 0


@dataclass
class SynthData:
    corpus: Corpus
    truth: RoseTree
    kb: KnowledgeBase
    records: list[dict] = field(default_factory=list)
    kb_raw: dict = field(default_factory=dict)
    leaf_topic: dict[str, str] = field(default_factory=dict)  # doc id -> topic


def _sample_text(rng: np.random.Generator, theta: np.ndarray, length: int,
                 noise: float) -> str:
    w = len(theta)
    p = (1.0 - noise) * theta + noise / w
    p = p / p.sum()
    counts = rng.multinomial(length, p)
    words = []
    for tid in np.nonzero(counts)[0]:
        words.extend([f"w{tid}"] * int(counts[tid]))
    return " ".join(words)


def synth(config: SynthConfig = SynthConfig()) -> SynthData:
    """Ground-truth hierarchy with Dirichlet-refined topics, multinomial docs,
    and a knowledge base mirroring the truth tree."""
    rng = np.random.default_rng(config.seed)
    w = config.vocab
    truth = RoseTree()
    kb_nodes: list[dict] = []
    records: list[dict] = []
    leaf_topic: dict[str, str] = {}
    counter = [0]

    def expand(label: str, parents: list[str], theta: np.ndarray, level: int) -> int:
        node = truth.new_node(label=label, kb_ref=label)
        kb_doc_objs = []
        for k in range(config.kb_docs_per_node):
            kb_doc_objs.append({
                "id": f"kb_{label}_{k}",
                "text": _sample_text(rng, theta, config.kb_doc_length, config.noise),
            })
        kb_nodes.append({"id": label, "name": label, "parents": parents,
                         "docs": kb_doc_objs})
        if level == len(config.branching):
            for _ in range(config.docs_per_leaf):
                counter[0] += 1
                did = f"d{counter[0]:05d}"
                records.append({"id": did,
                                "text": _sample_text(rng, theta,
                                                     config.doc_length,
                                                     config.noise)})
                leaf_topic[did] = label
                leaf = truth.new_node(label=did, docs=[did])
                truth.attach(node.id, leaf.id)
            return node.id
        for c in range(config.branching[level]):
            alpha = np.maximum(config.concentration * w * theta, 1e-8)
            child_theta = rng.dirichlet(alpha)
            cid = expand(f"{label}.{c}", [label], child_theta, level + 1)
            truth.attach(node.id, cid)
        return node.id

    root_theta = rng.dirichlet(np.ones(w))
    truth.root = expand("t", [], root_theta, 0)
    corpus = build_corpus(records)
    kb_raw = {"nodes": kb_nodes}
    kb = parse_kb(kb_raw, corpus.vocab)
    return SynthData(corpus=corpus, truth=truth, kb=kb, records=records,
                     kb_raw=kb_raw, leaf_topic=leaf_topic)
