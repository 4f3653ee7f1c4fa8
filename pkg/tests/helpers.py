"""Shared oracles and builders for the test suite.

Everything here is deliberately independent of the library's hot paths:
enumeration oracles recompute distributions from first principles so chain
and solver outputs can be checked against them.
"""

import itertools

import numpy as np

from onmf import Network
from onmf.sources import _neighbor_table


def exact_boltzmann(n: int, temperature: float) -> dict:
    """Exact lattice Boltzmann distribution by enumerating all 2^(n*n) states."""
    nbrs, counts = _neighbor_table(n)
    edges = set()
    for s in range(n * n):
        for a in range(counts[s]):
            t = int(nbrs[s, a])
            edges.add((min(s, t), max(s, t)))
    edges = sorted(edges)
    states = []
    energies = []
    for bits in itertools.product((-1, 1), repeat=n * n):
        states.append(bits)
        energies.append(sum(bits[u] * bits[v] for u, v in edges))
    weights = np.exp(np.array(energies, dtype=float) / temperature)
    weights /= weights.sum()
    return dict(zip(states, weights))


def empirical_distribution(counts: dict) -> dict:
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


def cycle_network(n: int) -> Network:
    return Network.from_edges([(i, (i + 1) % n) for i in range(n)],
                              undirected=True)


def path_network(n: int) -> Network:
    return Network.from_edges([(i, i + 1) for i in range(n - 1)],
                              undirected=True)


def weighted_5node_network() -> Network:
    """Symmetric weighted 5-node network with a triangle (aperiodic walk)."""
    edges = [(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5), (2, 3, 1.5),
             (3, 4, 1.0), (4, 0, 2.5)]
    both = []
    for u, v, w in edges:
        both.append((u, v, w))
        both.append((v, u, w))
    return Network.from_edges(both)


def smallworld_network(n: int, k: int, p: float, seed: int) -> Network:
    import networkx as nx

    G = nx.watts_strogatz_graph(n, k, p, seed=seed)
    return Network.from_edges(list(G.edges()), undirected=True)


def mann_whitney_auc(scores: dict, labels: dict, lower_is_positive: bool) -> float:
    """Direct pairwise Mann-Whitney statistic with half credit for ties."""
    pos = [scores[k] for k in scores if labels[k]]
    neg = [scores[k] for k in scores if not labels[k]]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp == sn:
                total += 0.5
            elif (sp < sn) == lower_is_positive:
                total += 1.0
    return total / (len(pos) * len(neg))


def sparse_coding_instances(count: int = 100, seed: int = 20240521):
    """Deterministic random sparse-coding instances for the oracle comparison.

    Dictionaries are redrawn until the positive spectrum of W^T W clears 0.06,
    the level at which the fixed-step reference descent converges within its
    iteration budget.
    """
    rng = np.random.default_rng(seed)
    lams = (0.0, 0.1, 1.0)
    out = []
    for i in range(count):
        d = int(rng.integers(2, 7))
        n = int(rng.integers(1, 5))
        r = int(rng.integers(1, 4))
        X = rng.random((d, n))
        while True:
            W = rng.random((d, r)) + 0.05
            eigs = np.linalg.eigvalsh(W.T @ W)
            positive = eigs[eigs > 1e-10]
            if positive.size and positive.min() >= 0.06:
                break
        out.append((X, W, lams[i % 3]))
    return out
