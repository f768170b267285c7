"""Child ordering by simulated annealing and DOI-based tree cutting."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import FocusNotFound
from .rosetree import RoseTree


@dataclass(frozen=True)
class LayoutConfig:
    weights: tuple[float, float, float] = (1.0, 1.0, 0.5)  # sim, read, stab
    max_proposals: int = 10_000
    max_rejections: int = 500
    cooling: float = 0.99
    target_acceptance: float = 0.8
    restarts: int = 4
    exhaustive_limit: int = 3  # brute-force node sizes up to this many children


@dataclass
class Ordering:
    order: dict[int, list[int]] = field(default_factory=dict)


@dataclass
class DoiCut:
    focus: int
    pinned: set[int]
    visible: set[int]
    collapsed: set[int]


def _cos(u: np.ndarray | None, v: np.ndarray | None) -> float:
    if u is None or v is None:
        return 0.0
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def similarity_cost(order: list[int], node_vectors: dict) -> float:
    """Negated sum of adjacent-pair cosines; lower keeps similar nodes close."""
    return -sum(_cos(node_vectors.get(order[i - 1]), node_vectors.get(order[i]))
                for i in range(1, len(order)))


def readability_cost(order: list[int], category_counts: dict) -> float:
    """Stripe-crossing count against the fixed first-level category order.

    ``category_counts[child]`` is an array of doc counts per category; a doc
    of a later category in an earlier child crosses every earlier-category
    doc of every later child.
    """
    rows = [np.asarray(category_counts[c], dtype=np.float64) for c in order]
    total = 0.0
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            # sum_{k<l} n_{i,l} * n_{j,k}
            prefix = np.cumsum(rows[j])[:-1]
            total += float(np.dot(rows[i][1:], prefix))
    return total


def stability_cost(order: list[int], previous_pos: dict[int, int]) -> float:
    """Drift of pairwise offsets relative to the previous ordering."""
    total = 0.0
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            total += abs((i - j) - (previous_pos[order[i]] - previous_pos[order[j]]))
    return total


def _combined(order, node_vectors, category_counts, previous_pos, weights, norms):
    ws, wr, wt = weights
    s = similarity_cost(order, node_vectors) if ws else 0.0
    r = readability_cost(order, category_counts) if wr else 0.0
    t = stability_cost(order, previous_pos) if wt else 0.0
    return ws * s / norms[0] + wr * r / norms[1] + wt * t / norms[2]


def optimize_children(children: list[int], node_vectors: dict,
                      category_counts: dict, previous_pos: dict[int, int],
                      weights=(1.0, 1.0, 0.5), seed: int = 0,
                      config: LayoutConfig = LayoutConfig()) -> list[int]:
    """Anneal one node's child permutation; never worse than the input order."""
    n = len(children)
    if n <= 1:
        return list(children)

    init = list(children)
    norms = (abs(similarity_cost(init, node_vectors)) or 1.0,
             readability_cost(init, category_counts) or 1.0,
             stability_cost(init, previous_pos) or 1.0)

    def cost(order):
        return _combined(order, node_vectors, category_counts, previous_pos,
                         weights, norms)

    if n <= config.exhaustive_limit:
        return list(min(itertools.permutations(children), key=cost))

    best, best_cost = list(init), cost(init)
    for restart in range(config.restarts):
        order, c = _anneal(init, cost, n, random.Random(seed * 7919 + restart),
                           config)
        if c < best_cost:
            best, best_cost = order, c
    return best


def _anneal(init, cost, n, rng, config):
    cur = list(init)
    if rng.random() < 0.5:
        rng.shuffle(cur)
    cur_cost = cost(cur)
    best, best_cost = list(cur), cur_cost

    def propose(order):
        out = list(order)
        r = rng.random()
        if r < 0.5:
            i = rng.randrange(n - 1)
            out[i], out[i + 1] = out[i + 1], out[i]
        elif r < 0.75:
            i = rng.randrange(n)
            j = rng.randrange(n)
            out.insert(j, out.pop(i))
        else:
            i, j = sorted(rng.sample(range(n), 2))
            out[i:j + 1] = reversed(out[i:j + 1])
        return out

    # Calibrate T0 so roughly target_acceptance of uphill moves pass.
    deltas = []
    for _ in range(30):
        d = cost(propose(cur)) - cur_cost
        if d > 0:
            deltas.append(d)
    t = (sum(deltas) / len(deltas)) / -math.log(config.target_acceptance) \
        if deltas else 1.0

    rejections = 0
    for _ in range(max(1, config.max_proposals // config.restarts)):
        cand = propose(cur)
        cand_cost = cost(cand)
        delta = cand_cost - cur_cost
        if delta <= 0 or rng.random() < math.exp(-delta / max(t, 1e-12)):
            cur, cur_cost = cand, cand_cost
            rejections = 0
            if cur_cost < best_cost:
                best, best_cost = list(cur), cur_cost
        else:
            rejections += 1
            if rejections >= config.max_rejections:
                break
        t *= config.cooling

    # Polish: descend over swaps, insertions, and reversals until locally
    # optimal under all three neighborhoods.
    improved = True
    while improved:
        improved = False
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                swap = list(best)
                swap[i], swap[j] = swap[j], swap[i]
                ins = list(best)
                ins.insert(j, ins.pop(i))
                rev = list(best)
                lo, hi = min(i, j), max(i, j)
                rev[lo:hi + 1] = reversed(rev[lo:hi + 1])
                for order in (swap, ins, rev):
                    c = cost(order)
                    if c < best_cost - 1e-12:
                        best, best_cost = order, c
                        improved = True
    return best, best_cost


def category_count_map(tree: RoseTree, category_of: dict[str, int],
                       num_categories: int) -> dict[int, np.ndarray]:
    """Per-node doc counts over first-level categories; uncategorized docs
    contribute to no stripe."""
    out: dict[int, np.ndarray] = {}

    def walk(nid: int) -> np.ndarray:
        node = tree.nodes[nid]
        counts = np.zeros(num_categories)
        for d in node.docs:
            k = category_of.get(d)
            if k is not None:
                counts[k] += 1
        for c in node.children:
            counts += walk(c)
        out[nid] = counts
        return counts

    walk(tree.root)
    return out


def optimize_ordering(tree: RoseTree, node_vectors: dict,
                      category_counts: dict, previous: Ordering | None = None,
                      weights=(1.0, 1.0, 0.5), seed: int = 0,
                      config: LayoutConfig = LayoutConfig()) -> Ordering:
    """Independent annealing run per internal node; seeds derive from
    (seed, node id) so results are reproducible node by node."""
    out = Ordering()
    prev_orders = previous.order if previous else {}
    for nid in tree.subtree_nodes(tree.root):
        children = tree.nodes[nid].children
        if not children:
            continue
        prev = prev_orders.get(nid, [])
        pos = {c: i for i, c in enumerate(prev) if c in set(children)}
        for i, c in enumerate(children):
            pos.setdefault(c, i)  # new children keep their current index
        out.order[nid] = optimize_children(
            children, node_vectors, category_counts, pos, weights,
            seed=hash((seed, nid)) & 0x7FFFFFFF, config=config)
    return out


def doi_cut(tree: RoseTree, overall: dict[int, float], focus: int,
            pinned: set[int] | None = None, budget: int = 50,
            a_max: float = 10.0) -> DoiCut:
    """Focus+context cut: keep the budget top-DOI nodes, pins, and their
    ancestor closure; everything else collapses at its highest hidden node."""
    nids = tree.subtree_nodes(tree.root)
    if focus not in tree.nodes or focus not in set(nids):
        raise FocusNotFound(str(focus))
    pinned = set(pinned or ())
    doc_counts = {nid: max(1, len(tree.docs_under(nid))) for nid in nids}
    max_count = max(doc_counts.values())

    # Hop distance from the focus over the undirected tree.
    dist = {focus: 0}
    frontier = [focus]
    while frontier:
        nxt = []
        for nid in frontier:
            node = tree.nodes[nid]
            for other in ([node.parent] if node.parent is not None else []) + node.children:
                if other not in dist:
                    dist[other] = dist[nid] + 1
                    nxt.append(other)
        frontier = nxt

    def doi(nid: int) -> float:
        api = a_max * (doc_counts[nid] / max_count) * overall.get(nid, 0.0)
        return api - dist[nid]

    ranked = sorted(nids, key=lambda nid: (-doi(nid), nid))
    visible = set(ranked[:budget]) | pinned | {focus, tree.root}
    for nid in list(visible):
        p = tree.nodes[nid].parent
        while p is not None and p not in visible:
            visible.add(p)
            p = tree.nodes[p].parent
    collapsed = {nid for nid in nids
                 if nid not in visible and tree.nodes[nid].parent in visible}
    return DoiCut(focus=focus, pinned=pinned, visible=visible, collapsed=collapsed)
