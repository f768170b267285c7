"""Knowledge-base DAG loading, validation, and the document inverted index."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import Document, TokenizerConfig, Vocabulary, docs_to_matrix, tokenize
from .errors import SchemaViolation

SUPER_ROOT = "__super_root__"


@dataclass
class KbNode:
    id: str
    name: str
    parents: list[str] = field(default_factory=list)
    children: list[str] = field(default_factory=list)
    term_counts: dict[int, int] = field(default_factory=dict)
    doc_indices: list[int] = field(default_factory=list)  # indices into kb.docs


class KnowledgeBase:
    """A DAG of named nodes with term profiles and attached reference docs."""

    def __init__(self, nodes: dict[str, KbNode], docs: list[Document],
                 doc_node: list[str], vocab: Vocabulary):
        self.nodes = nodes
        self.docs = docs            # reference documents, tokenized
        self.doc_node = doc_node    # attachment node id per doc
        self.vocab = vocab
        self.roots = sorted(nid for nid, n in nodes.items() if not n.parents)
        self.virtual_root = False
        if len(self.roots) > 1:
            # Virtual super-root so every walk terminates at a single node.
            sr = KbNode(id=SUPER_ROOT, name=SUPER_ROOT, children=list(self.roots))
            for r in self.roots:
                nodes[r].parents.append(SUPER_ROOT)
            nodes[SUPER_ROOT] = sr
            self.roots = [SUPER_ROOT]
            self.virtual_root = True
        self.root = self.roots[0] if self.roots else None
        self._matrix: sp.csr_matrix | None = None
        self._lengths: np.ndarray | None = None
        self._levels: dict[str, int] | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._matrix = docs_to_matrix(self.docs, self.vocab.size)
        return self._matrix

    @property
    def doc_lengths(self) -> np.ndarray:
        if self._lengths is None:
            self._lengths = np.array([d.length for d in self.docs], dtype=np.float64)
        return self._lengths

    def levels(self) -> dict[str, int]:
        """Longest-path-from-root level per node, so a node's level is strictly
        greater than every parent's."""
        if self._levels is None:
            order = self.topological_order()
            lv = {nid: 0 for nid in self.roots}
            for nid in order:
                base = lv.get(nid, 0)
                for c in self.nodes[nid].children:
                    lv[c] = max(lv.get(c, 0), base + 1)
            self._levels = lv
        return self._levels

    def depth(self) -> int:
        lv = self.levels()
        real = [d for nid, d in lv.items() if nid != SUPER_ROOT]
        depth = max(real) if real else 0
        return depth - (1 if self.virtual_root else 0)

    def topological_order(self) -> list[str]:
        indeg = {nid: len(n.parents) for nid, n in self.nodes.items()}
        queue = sorted(nid for nid, d in indeg.items() if d == 0)
        out = []
        i = 0
        while i < len(queue):
            nid = queue[i]
            i += 1
            out.append(nid)
            added = []
            for c in self.nodes[nid].children:
                indeg[c] -= 1
                if indeg[c] == 0:
                    added.append(c)
            queue.extend(sorted(added))
        if len(out) != len(self.nodes):
            cyc = sorted(set(self.nodes) - set(out))
            raise SchemaViolation(f"knowledge base contains a cycle through {cyc[0]!r}",
                                  path=f"/nodes/{cyc[0]}")
        return out

    def node_profile(self, nid: str) -> tuple[np.ndarray, np.ndarray]:
        """Sorted sparse term profile: explicit terms plus attached doc counts."""
        node = self.nodes[nid]
        counts: dict[int, float] = dict(node.term_counts)
        for di in node.doc_indices:
            for tid, c in self.docs[di].counts.items():
                counts[tid] = counts.get(tid, 0) + c
        if not counts:
            return np.array([], dtype=np.int64), np.array([])
        idx = np.array(sorted(counts), dtype=np.int64)
        val = np.array([counts[t] for t in idx], dtype=np.float64)
        return idx, val


def load_kb(path: str, vocab: Vocabulary,
            config: TokenizerConfig = TokenizerConfig(),
            aggregate: bool = False) -> KnowledgeBase:
    """Load {"nodes": [...]} KB JSON; validates the DAG property.

    With ``aggregate``, each node's term profile additionally pools every
    descendant's profile.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return parse_kb(raw, vocab, config, aggregate)


def parse_kb(raw: dict, vocab: Vocabulary,
             config: TokenizerConfig = TokenizerConfig(),
             aggregate: bool = False) -> KnowledgeBase:
    if not isinstance(raw, dict) or "nodes" not in raw:
        raise SchemaViolation("KB document must contain 'nodes'", path="/nodes")
    nodes: dict[str, KbNode] = {}
    docs: list[Document] = []
    doc_node: list[str] = []
    for i, obj in enumerate(raw["nodes"]):
        if "id" not in obj:
            raise SchemaViolation("node missing 'id'", path=f"/nodes/{i}/id")
        nid = str(obj["id"])
        if nid in nodes:
            raise SchemaViolation(f"duplicate node id {nid!r}", path=f"/nodes/{i}/id")
        term_counts = {}
        for word, cnt in (obj.get("terms") or {}).items():
            term_counts[vocab.add(word)] = int(cnt)
        node = KbNode(id=nid, name=str(obj.get("name", nid)),
                      parents=[str(p) for p in obj.get("parents", [])],
                      term_counts=term_counts)
        for j, dobj in enumerate(obj.get("docs") or []):
            if "text" not in dobj:
                raise SchemaViolation("KB doc missing 'text'",
                                      path=f"/nodes/{i}/docs/{j}/text")
            doc = Document.from_tokens(str(dobj.get("id", f"{nid}:{j}")),
                                       tokenize(dobj["text"], config), vocab,
                                       body=dobj["text"])
            node.doc_indices.append(len(docs))
            docs.append(doc)
            doc_node.append(nid)
        nodes[nid] = node
    for nid, node in nodes.items():
        for p in node.parents:
            if p not in nodes:
                raise SchemaViolation(f"node {nid!r} references unknown parent {p!r}",
                                      path=f"/nodes/{nid}/parents")
            nodes[p].children.append(nid)
    for n in nodes.values():
        n.children.sort()
    kb = KnowledgeBase(nodes, docs, doc_node, vocab)
    kb.topological_order()  # raises on cycles
    if aggregate:
        _aggregate_profiles(kb)
    return kb


def _aggregate_profiles(kb: KnowledgeBase) -> None:
    for nid in reversed(kb.topological_order()):
        node = kb.nodes[nid]
        for c in node.children:
            for tid, cnt in kb.nodes[c].term_counts.items():
                node.term_counts[tid] = node.term_counts.get(tid, 0) + cnt


def build_inverted_index(kb: KnowledgeBase) -> dict[int, list[int]]:
    """term-id -> sorted posting list of KB doc indices."""
    index: dict[int, list[int]] = {}
    for di, doc in enumerate(kb.docs):
        for tid in doc.counts:
            index.setdefault(tid, []).append(di)
    for postings in index.values():
        postings.sort()
    return index


def lookup(index: dict[int, list[int]], term_ids: list[int],
           mode: str = "or") -> list[int]:
    """Disjunctive or conjunctive posting lookup."""
    sets = [set(index.get(t, ())) for t in term_ids]
    if not sets:
        return []
    if mode == "and":
        out = set.intersection(*sets)
    else:
        out = set.union(*sets)
    return sorted(out)
