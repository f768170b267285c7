import random

import pytest

from hiersteer.corpus import build_corpus
from hiersteer.rosetree import RoseTree


def random_tree(n_docs: int, rng: random.Random, max_children: int = 4) -> RoseTree:
    """Random rose tree whose leaves are doc-labeled d0..d{n-1}."""
    tree = RoseTree()
    nodes = []
    for i in range(n_docs):
        nodes.append(tree.new_node(label=f"d{i}", docs=[f"d{i}"]).id)
    while len(nodes) > 1:
        k = rng.randint(2, min(max_children, len(nodes)))
        picks = [nodes.pop(rng.randrange(len(nodes))) for _ in range(k)]
        parent = tree.new_node(label="")
        for p in picks:
            tree.attach(parent.id, p)
        nodes.append(parent.id)
    tree.root = nodes[0]
    return tree


def random_corpus(n_docs: int, rng: random.Random, vocab: int = 40,
                  length: int = 25):
    records = []
    for i in range(n_docs):
        words = [f"w{rng.randrange(vocab)}" for _ in range(length)]
        records.append({"id": f"d{i}", "text": " ".join(words)})
    return build_corpus(records)


@pytest.fixture
def rng():
    return random.Random(0)
