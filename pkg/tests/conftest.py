import numpy as np
import pytest

from topdown.hierarchy import build_tree


def random_edges(n_nodes: int, rng: np.random.Generator, max_children: int = 5):
    """Random tree edge list over n_nodes named nodes (n000 is the root)."""
    names = [f"n{i:03d}" for i in range(n_nodes)]
    edges = []
    for i in range(1, n_nodes):
        # parent drawn among earlier nodes keeps the structure acyclic
        parent = names[int(rng.integers(0, i))]
        edges.append((names[i], parent))
    return edges


@pytest.fixture
def toy_tree():
    """1 root, 3 parents, 12 leaves (the 3-level acceptance tree)."""
    edges = []
    for p in ("a", "b", "c"):
        edges.append((p, "total"))
        for c in range(4):
            edges.append((f"{p}{c}", p))
    return build_tree(edges)


@pytest.fixture
def tiny_tree():
    return build_tree([("A", "root"), ("B", "root")])
