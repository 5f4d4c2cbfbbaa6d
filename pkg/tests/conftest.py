import numpy as np
import pytest

from coalmux.network import Layer, MultilayerNetwork, MultilayerPartition, Vertex, VertexRegistry


def make_net(n, layer_edges, couplings=None, participants=None, powers=None):
    """Network over vertices v0..v{n-1}; ``layer_edges`` maps key -> edge list.

    Edges are ``(i, j)`` or ``(i, j, w)``.  Participants default to all vertices.
    """
    powers = powers if powers is not None else [1.0] * n
    registry = VertexRegistry(Vertex(f"v{i}", f"actor {i}", "org", float(powers[i])) for i in range(n))
    layers = []
    for t, (key, edges) in enumerate(layer_edges.items()):
        src = [e[0] for e in edges]
        dst = [e[1] for e in edges]
        w = [e[2] if len(e) > 2 else 1.0 for e in edges]
        part = participants[key] if participants and key in participants else range(n)
        layers.append(Layer(key, key, t, np.array(list(part)), src, dst, w))
    return MultilayerNetwork(registry, layers, couplings)


def clique_edges(nodes):
    nodes = list(nodes)
    return [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :]]


def partition_from(net, labels):
    """``labels`` maps layer key -> labels aligned with that layer's participants."""
    return MultilayerPartition.from_arrays(net, {k: np.asarray(v) for k, v in labels.items()})


def random_layer_edges(rng, n, p):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return list(zip(iu[keep].tolist(), ju[keep].tolist()))


@pytest.fixture
def two_triangles():
    return make_net(6, {"A": clique_edges(range(3)) + clique_edges(range(3, 6))})
