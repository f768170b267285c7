"""Sweep the constraint weight on synthetic data and report quality per value.

The constraint tree is derived from the ground truth but deliberately damaged:
leaf doc-sets stay intact while a fraction of leaves move under the wrong
parent. The fine-grained constraints are therefore still true (they help at
small weights by breaking near-ties), while the coarse structure is wrong
(trusting it completely at large weights hurts), so the quality curve peaks at
an interior weight.
"""
import argparse
import random
import time

from hiersteer.brt import cluster
from hiersteer.metrics import SynthConfig, synth, triple_fan_accuracy
from hiersteer.rosetree import RoseTree

LAMBDAS = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2]


def regroup_leaves(truth: RoseTree, frac: float, rng: random.Random) -> RoseTree:
    """Move frac of the leaves (doc sets intact) under a different parent."""
    t = truth.clone()
    leaves = sorted(nid for nid, n in t.nodes.items() if n.docs)
    parents = sorted({t.nodes[leaf].parent for leaf in leaves})
    for leaf in rng.sample(leaves, int(frac * len(leaves))):
        old = t.nodes[leaf].parent
        new = rng.choice([p for p in parents if p != old])
        t.nodes[old].children.remove(leaf)
        t.nodes[leaf].parent = new
        t.nodes[new].children.append(leaf)
    for nid in list(t.nodes):
        n = t.nodes.get(nid)
        if n and nid != t.root and not n.children and not n.docs:
            t.nodes[n.parent].children.remove(nid)
            del t.nodes[nid]
    t.contract_unary()
    return t


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--noise", type=float, default=0.15)
    ap.add_argument("--doc-length", type=int, default=8)
    ap.add_argument("--regroup-frac", type=float, default=0.6)
    ap.add_argument("--docs-per-leaf", type=int, default=7)
    args = ap.parse_args()

    per_lambda = [0.0] * len(LAMBDAS)
    for seed in range(1, args.seeds + 1):
        data = synth(SynthConfig(branching=(3, 3),
                                 docs_per_leaf=args.docs_per_leaf, vocab=300,
                                 noise=args.noise, doc_length=args.doc_length,
                                 seed=seed))
        damaged = regroup_leaves(data.truth, args.regroup_frac,
                                 random.Random(seed + 77))
        constraints = damaged.decompose(cap=10**9, seed=seed).items
        t0 = time.time()
        accs = [triple_fan_accuracy(
            cluster(data.corpus, constraints=constraints, lam=lam), data.truth)
            for lam in LAMBDAS]
        per_lambda = [p + a for p, a in zip(per_lambda, accs)]
        print(f"seed={seed} accs={[f'{a:.3f}' for a in accs]} "
              f"({time.time() - t0:.0f}s)", flush=True)

    print("lambda    mean accuracy")
    for lam, total in zip(LAMBDAS, per_lambda):
        print(f"{lam:<9g} {total / args.seeds:.3f}")


if __name__ == "__main__":
    main()
