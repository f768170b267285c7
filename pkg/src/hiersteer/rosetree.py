"""Multi-branch rose trees: LCA queries, triple/fan semantics, (de)serialization."""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field

from .dcm import ClusterStats
from .errors import DocNotInTree, NodeNotFound, SchemaViolation


@dataclass
class Node:
    id: int
    label: str = ""
    children: list[int] = field(default_factory=list)
    parent: int | None = None
    docs: list[str] = field(default_factory=list)  # leaves only
    stats: ClusterStats | None = None
    provenance: dict | None = None
    kb_ref: str | None = None
    uncertainty: dict | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class TripleFan:
    """A triple (pair merges before the outsider joins) or a fan (all at once)."""

    kind: str                 # "triple" | "fan"
    members: tuple[str, str, str]
    pair: tuple[str, str] | None = None  # canonical (min, max) order, triples only

    @staticmethod
    def triple(a: str, b: str, c: str) -> "TripleFan":
        pair = (min(a, b), max(a, b))
        return TripleFan(kind="triple", members=tuple(sorted((a, b, c))), pair=pair)

    @staticmethod
    def fan(a: str, b: str, c: str) -> "TripleFan":
        return TripleFan(kind="fan", members=tuple(sorted((a, b, c))))


class RoseTree:
    """Arena-backed rose tree; node ids are stable and never reused."""

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.root: int | None = None
        self._next_id = 0

    def new_node(self, **kwargs) -> Node:
        node = Node(id=self._next_id, **kwargs)
        self.nodes[node.id] = node
        self._next_id += 1
        return node

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NodeNotFound(str(node_id))

    def attach(self, parent_id: int, child_id: int) -> None:
        self.nodes[parent_id].children.append(child_id)
        self.nodes[child_id].parent = parent_id

    def clone(self) -> "RoseTree":
        return copy.deepcopy(self)

    # ----- traversal helpers -----

    def leaves(self, node_id: int | None = None) -> list[int]:
        start = self.root if node_id is None else node_id
        out, stack = [], [start]
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out.append(nid)
            else:
                stack.extend(reversed(node.children))
        return out

    def subtree_nodes(self, node_id: int) -> list[int]:
        out, stack = [], [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(self.nodes[nid].children)
        return out

    def docs_under(self, node_id: int) -> list[str]:
        out = []
        for nid in self.subtree_nodes(node_id):
            out.extend(self.nodes[nid].docs)
        return out

    def doc_ids(self) -> list[str]:
        return self.docs_under(self.root)

    def leaf_of_doc(self) -> dict[str, int]:
        out = {}
        for nid in self.subtree_nodes(self.root):
            for d in self.nodes[nid].docs:
                out[d] = nid
        return out

    def _reachable(self) -> set[int]:
        return set(self.subtree_nodes(self.root)) if self.root is not None else set()

    def depths(self) -> dict[int, int]:
        out = {self.root: 0}
        stack = [self.root]
        while stack:
            nid = stack.pop()
            for c in self.nodes[nid].children:
                out[c] = out[nid] + 1
                stack.append(c)
        return out

    def depth(self) -> int:
        d = self.depths()
        return max(d[l] for l in self.leaves()) if d else 0

    # ----- LCA and triple/fan semantics -----

    def lca_nodes(self, x: int, y: int, depths: dict[int, int] | None = None) -> int:
        if depths is None:
            depths = self.depths()
        while x != y:
            if depths[x] >= depths[y]:
                x = self.nodes[x].parent
            else:
                y = self.nodes[y].parent
        return x

    def lca(self, x: str, y: str) -> int:
        leaf_of = self.leaf_of_doc()
        if x not in leaf_of or y not in leaf_of:
            raise DocNotInTree(x if x not in leaf_of else y)
        return self.lca_nodes(leaf_of[x], leaf_of[y])

    def classify_triplet(self, a: str, b: str, c: str,
                         _ctx: tuple[dict, dict] | None = None) -> TripleFan:
        if _ctx is None:
            leaf_of = self.leaf_of_doc()
            depths = self.depths()
        else:
            leaf_of, depths = _ctx
        for d in (a, b, c):
            if d not in leaf_of:
                raise DocNotInTree(d)
        dab = depths[self.lca_nodes(leaf_of[a], leaf_of[b], depths)]
        dac = depths[self.lca_nodes(leaf_of[a], leaf_of[c], depths)]
        dbc = depths[self.lca_nodes(leaf_of[b], leaf_of[c], depths)]
        if dab == dac == dbc:
            return TripleFan.fan(a, b, c)
        if dab > dac and dab > dbc:
            return TripleFan.triple(a, b, c)
        if dac > dab and dac > dbc:
            return TripleFan.triple(a, c, b)
        return TripleFan.triple(b, c, a)

    def decompose(self, cap: int = 200_000, seed: int = 0,
                  docs: list[str] | None = None) -> "Decomposition":
        """Classify all (or a seeded uniform sample of) document triplets."""
        all_docs = sorted(docs if docs is not None else self.doc_ids())
        n = len(all_docs)
        total = math.comb(n, 3)
        ctx = (self.leaf_of_doc(), self.depths())
        items: list[TripleFan] = []
        if total <= cap:
            for i in range(n):
                for j in range(i + 1, n):
                    for k in range(j + 1, n):
                        items.append(self.classify_triplet(
                            all_docs[i], all_docs[j], all_docs[k], _ctx=ctx))
            return Decomposition(items=items, exhaustive=True, seed=seed, total=total)
        rng = random.Random(seed)
        chosen: set[tuple[int, int, int]] = set()
        while len(chosen) < cap:
            trip = tuple(sorted(rng.sample(range(n), 3)))
            chosen.add(trip)
        for i, j, k in sorted(chosen):
            items.append(self.classify_triplet(all_docs[i], all_docs[j], all_docs[k], _ctx=ctx))
        return Decomposition(items=items, exhaustive=False, seed=seed, total=total)

    # ----- editing helpers -----

    def contract_unary(self) -> None:
        """Remove single-child internal chains (explicit operation, not automatic)."""
        changed = True
        while changed:
            changed = False
            for nid in list(self.subtree_nodes(self.root)):
                node = self.nodes.get(nid)
                if node is None or node.docs or len(node.children) != 1:
                    continue
                child = node.children[0]
                if node.parent is None:
                    self.root = child
                    self.nodes[child].parent = None
                else:
                    parent = self.nodes[node.parent]
                    parent.children[parent.children.index(nid)] = child
                    self.nodes[child].parent = node.parent
                changed = True

    # ----- serialization -----

    def serialize(self, node_id: int | None = None) -> dict:
        nid = self.root if node_id is None else node_id
        node = self.nodes[nid]
        out: dict = {"id": node.id, "label": node.label}
        if node.kb_ref is not None:
            out["kb_ref"] = node.kb_ref
        if node.uncertainty is not None:
            out["uncertainty"] = node.uncertainty
        if node.provenance is not None:
            out["provenance"] = node.provenance
        if node.docs:
            out["docs"] = list(node.docs)
        out["children"] = [self.serialize(c) for c in node.children]
        return out

    @classmethod
    def parse(cls, doc: dict) -> "RoseTree":
        tree = cls()
        seen_ids: set[int] = set()
        seen_docs: set[str] = set()

        def walk(obj: dict, path: str, parent: int | None) -> int:
            if not isinstance(obj, dict):
                raise SchemaViolation("node must be an object", path=path)
            if "id" not in obj or not isinstance(obj["id"], int):
                raise SchemaViolation("missing or non-integer 'id'", path=path + "/id")
            nid = obj["id"]
            if nid in seen_ids:
                raise SchemaViolation(f"duplicate node id {nid}", path=path + "/id")
            seen_ids.add(nid)
            children = obj.get("children", [])
            if not isinstance(children, list):
                raise SchemaViolation(f"node {nid}: 'children' must be a list",
                                      path=path + "/children")
            docs = obj.get("docs", [])
            if not isinstance(docs, list):
                raise SchemaViolation(f"node {nid}: 'docs' must be a list",
                                      path=path + "/docs")
            for d in docs:
                if d in seen_docs:
                    raise SchemaViolation(
                        f"node {nid}: document {d!r} appears in more than one leaf",
                        path=path + "/docs")
                seen_docs.add(d)
            node = Node(id=nid, label=str(obj.get("label", "")),
                        docs=[str(d) for d in docs],
                        kb_ref=obj.get("kb_ref"),
                        uncertainty=obj.get("uncertainty"),
                        provenance=obj.get("provenance"),
                        parent=parent)
            tree.nodes[nid] = node
            for i, ch in enumerate(children):
                node.children.append(walk(ch, f"{path}/children/{i}", nid))
            return nid

        tree.root = walk(doc, "", None)
        tree._next_id = max(seen_ids) + 1 if seen_ids else 0
        return tree


@dataclass
class Decomposition:
    items: list[TripleFan]
    exhaustive: bool
    seed: int
    total: int
