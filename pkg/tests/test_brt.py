import json
import math
import random

import pytest

from conftest import random_corpus, random_tree
from hiersteer.brt import (MODES, BrtConfig, ForestState, MergeCandidate,
                           cluster, rebuild_subtree)
from hiersteer.dcm import DcmParams, log_cluster_marginal, pi_prior
from hiersteer.errors import TooFewDocuments
from hiersteer.rosetree import RoseTree, TripleFan


def params_for(corpus):
    return DcmParams(vocab_size=max(1, corpus.vocab.size))


def random_merge_run(state: ForestState, rng: random.Random):
    """Apply a uniformly random merge sequence, bypassing likelihood scoring."""
    while len(state.alive) > 1:
        roots = sorted(state.alive)
        left, right = rng.sample(roots, 2)
        ti, tj = state.trees[left], state.trees[right]
        modes = state._valid_modes(ti, tj)
        mode = rng.choice(modes)
        cand = MergeCandidate(left=left, right=right, mode=mode,
                              log_likelihood_ratio=0.0,
                              violations=state.count_new_violations(left, right, mode),
                              lam=state.lam)
        state.apply_merge(cand)


def preserved_count(tree: RoseTree, constraints) -> int:
    ctx = (tree.leaf_of_doc(), tree.depths())
    n = 0
    for tf in constraints:
        got = tree.classify_triplet(*tf.members, _ctx=ctx)
        if got.kind == tf.kind and (tf.kind == "fan" or got.pair == tf.pair):
            n += 1
    return n


def test_violation_totals_match_final_tree_oracle():
    # Sum of per-merge violation counts must equal the number of constraints
    # not preserved by the final tree, for any merge order and mode choice.
    rng = random.Random(11)
    for case in range(150):
        n = rng.randint(4, 8)
        corpus = random_corpus(n, rng, vocab=12, length=6)
        tc = random_tree(rng.randint(3, n), rng)
        constraints = tc.decompose().items
        state = ForestState(corpus, params_for(corpus), BrtConfig(), lam=1.0,
                            constraints=constraints)
        random_merge_run(state, rng)
        roots = list(state.alive)
        state.tree.root = roots[0]
        total = len(constraints)
        kept = preserved_count(state.tree, constraints)
        assert state.violations_total == total - kept, f"case {case}"


def reference_log_evidence(tree: RoseTree, nid: int, corpus, params, pi0):
    """Direct recursive p(D|T) evaluation used as an oracle."""
    node = tree.nodes[nid]
    docs = [corpus.doc(d) for d in tree.docs_under(nid)]
    stats_docs = sorted(docs, key=lambda d: d.id)
    pooled = {}
    for d in docs:
        for t, c in d.counts.items():
            pooled[t] = pooled.get(t, 0) + c
    from hiersteer.dcm import ClusterStats
    log_f = log_cluster_marginal(
        ClusterStats(doc_count=len(docs), pooled_counts=pooled), stats_docs, params)
    if node.is_leaf:
        return log_f
    pi = pi_prior(max(2, len(node.children)), pi0)
    childsum = sum(reference_log_evidence(tree, c, corpus, params, pi0)
                   for c in node.children)
    a = math.log(pi) + log_f
    if pi >= 1.0:
        return a
    b = math.log1p(-pi) + childsum
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def test_incremental_evidence_matches_recursive_oracle():
    rng = random.Random(3)
    for _ in range(10):
        corpus = random_corpus(6, rng, vocab=10, length=5)
        state = ForestState(corpus, params_for(corpus), BrtConfig())
        random_merge_run(state, rng)
        root = next(iter(state.alive))
        state.tree.root = root
        want = reference_log_evidence(state.tree, root, corpus,
                                      params_for(corpus), 0.5)
        assert state.trees[root].log_ev == pytest.approx(want, rel=1e-9)


def test_likelihood_ratio_consistent_with_evidences():
    rng = random.Random(4)
    corpus = random_corpus(5, rng, vocab=8, length=6)
    state = ForestState(corpus, params_for(corpus), BrtConfig())
    roots = sorted(state.alive)
    llr = state.likelihood_ratio(roots[0], roots[1], "join")
    cand = MergeCandidate(left=roots[0], right=roots[1], mode="join",
                          log_likelihood_ratio=llr, violations=0, lam=0.0)
    before = state.trees[roots[0]].log_ev + state.trees[roots[1]].log_ev
    new = state.apply_merge(cand)
    assert state.trees[new].log_ev - before == pytest.approx(llr, rel=1e-9)


def test_modes_have_expected_child_counts():
    rng = random.Random(6)
    corpus = random_corpus(6, rng, vocab=8, length=5)
    state = ForestState(corpus, params_for(corpus), BrtConfig())
    r = sorted(state.alive)

    def merge(a, b, mode):
        return state.apply_merge(MergeCandidate(
            left=a, right=b, mode=mode, log_likelihood_ratio=0.0,
            violations=0, lam=0.0))

    ab = merge(r[0], r[1], "join")
    cd = merge(r[2], r[3], "join")
    assert len(state.tree.nodes[ab].children) == 2
    abe = merge(ab, r[4], "absorb-left")
    assert len(state.tree.nodes[abe].children) == 3
    both = merge(abe, cd, "collapse")
    assert len(state.tree.nodes[both].children) == 5


def test_absorb_and_collapse_require_internal_hosts():
    rng = random.Random(7)
    corpus = random_corpus(3, rng)
    state = ForestState(corpus, params_for(corpus), BrtConfig())
    r = sorted(state.alive)
    ti, tj = state.trees[r[0]], state.trees[r[1]]
    assert state._valid_modes(ti, tj) == ["join"]


def test_lambda_zero_matches_plain_clustering(rng):
    for seed in range(3):
        local = random.Random(seed)
        corpus = random_corpus(12, local, vocab=25, length=12)
        tc = random_tree(6, local)
        constraints = tc.decompose().items
        plain = cluster(corpus, lam=0.0)
        constrained = cluster(corpus, constraints=constraints, lam=0.0)
        assert json.dumps(plain.serialize(), sort_keys=True) == \
            json.dumps(constrained.serialize(), sort_keys=True)


def test_determinism():
    rng = random.Random(9)
    corpus = random_corpus(15, rng, vocab=20, length=10)
    a = cluster(corpus, lam=0.0)
    b = cluster(corpus, lam=0.0)
    assert json.dumps(a.serialize(), sort_keys=True) == \
        json.dumps(b.serialize(), sort_keys=True)


def test_high_lambda_reproduces_constraint_tree():
    # With overwhelming weight, the clustering must preserve every constraint.
    rng = random.Random(13)
    corpus = random_corpus(10, rng, vocab=15, length=8)
    tc = random_tree(10, rng)
    constraints = tc.decompose().items
    tree = cluster(corpus, constraints=constraints, lam=1e3)
    assert preserved_count(tree, constraints) == len(constraints)


def test_provenance_recorded_on_every_internal_node():
    rng = random.Random(2)
    corpus = random_corpus(8, rng)
    tree = cluster(corpus, lam=0.0)
    for nid in tree.subtree_nodes(tree.root):
        node = tree.nodes[nid]
        if not node.is_leaf:
            assert node.provenance is not None
            assert "log_posterior_ratio" in node.provenance
            assert node.provenance["mode"] in MODES


def test_doc_conservation():
    rng = random.Random(5)
    corpus = random_corpus(14, rng)
    tree = cluster(corpus, lam=0.0)
    assert sorted(tree.doc_ids()) == sorted(d.id for d in corpus.docs)


def test_cancel_produces_partial_tree():
    import threading

    rng = random.Random(8)
    corpus = random_corpus(12, rng)
    ev = threading.Event()
    ev.set()
    tree = cluster(corpus, lam=0.0, cancel_event=ev)
    assert tree.nodes[tree.root].provenance.get("partial") is True
    assert sorted(tree.doc_ids()) == sorted(d.id for d in corpus.docs)


def test_approx_mode_still_completes_and_conserves_docs():
    rng = random.Random(21)
    corpus = random_corpus(60, rng, vocab=30, length=10)
    tree = cluster(corpus, lam=0.0,
                   config=BrtConfig(approx=True, approx_neighbors=5,
                                    approx_refresh=10))
    assert sorted(tree.doc_ids()) == sorted(d.id for d in corpus.docs)
    assert "partial" not in (tree.nodes[tree.root].provenance or {})


def test_rebuild_subtree_keeps_node_id_and_rest_of_tree():
    rng = random.Random(17)
    corpus = random_corpus(10, rng)
    tree = RoseTree()
    leaves = [tree.new_node(label=f"d{i}", docs=[f"d{i}"]).id for i in range(10)]
    a = tree.new_node(label="a").id
    b = tree.new_node(label="b").id
    for l in leaves[:4]:
        tree.attach(a, l)
    for l in leaves[4:]:
        tree.attach(b, l)
    root = tree.new_node(label="r").id
    tree.attach(root, a)
    tree.attach(root, b)
    tree.root = root
    target = a
    outside_docs = sorted(set(tree.doc_ids()) - set(tree.docs_under(target)))
    out = rebuild_subtree(tree, target, corpus)
    assert target in out.nodes
    assert sorted(out.docs_under(target)) == sorted(tree.docs_under(target))
    assert sorted(set(out.doc_ids()) - set(out.docs_under(target))) == outside_docs
    assert out.nodes[target].parent == tree.nodes[target].parent


def test_rebuild_rejects_tiny_subtrees():
    rng = random.Random(19)
    corpus = random_corpus(4, rng)
    tree = cluster(corpus, lam=0.0)
    leaf = tree.leaves()[0]
    with pytest.raises(TooFewDocuments):
        rebuild_subtree(tree, leaf, corpus)
