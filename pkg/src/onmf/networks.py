"""Weighted networks and the motif-sampling Markov chains.

A network is a node set with a sparse nonnegative weight map; a motif is a
small template network F = ([k], A_F).  A vertex map x: [k] -> V is a
homomorphism when the product of target weights over the motif's edges is
positive.  Three samplers walk the space of homomorphisms: plain rejection
sampling, the Glauber chain (single-coordinate conditional resampling), and
the Pivot chain (random-walk move of the first node with a
Metropolis-Hastings correction, then successive resampling of the tail).

The exact Pivot acceptance combines the path-count ratio with the proposal
ratio, and the tail is resampled from conditionals weighted by remaining path
counts, so the chain's stationary law on bidirectional networks is the motif
weight distribution itself.  Approximate mode keeps only the in/out weight
ratio and extends the tail by plain neighbor weights, trading exactness for
speed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

_ORACLE_GUARD = 10 ** 7
_DENSE_LIMIT = 4000


class EdgeListError(ValueError):
    """Malformed edge-list input."""


class SamplingError(RuntimeError):
    """Homomorphism sampling failed (none found within the try budget)."""


class OracleSizeError(ValueError):
    """Brute-force enumeration would exceed the size guard."""


class Network:
    """Node set plus sparse nonnegative weight matrix.

    Immutable once built; per-node neighbor arrays and cumulative weights are
    precomputed for inverse-CDF sampling, so many chains may read one network
    concurrently.
    """

    def __init__(self, n: int, weights: dict[tuple[int, int], float],
                 labels: list[str] | None = None):
        if n < 1:
            raise ValueError("network needs at least one node")
        if labels is None:
            labels = [str(i) for i in range(n)]
        if len(labels) != n:
            raise ValueError("label count must match node count")
        self.n = n
        self.labels = list(labels)
        self._weights = {}
        for (a, b), w in weights.items():
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError("edge endpoint out of range")
            w = float(w)
            if not np.isfinite(w) or w < 0:
                raise ValueError("edge weights must be finite and nonnegative")
            if w > 0:
                self._weights[(int(a), int(b))] = w
        self._build_adjacency()

    def _build_adjacency(self):
        out_lists = [[] for _ in range(self.n)]
        in_lists = [[] for _ in range(self.n)]
        for (a, b), w in self._weights.items():
            out_lists[a].append((b, w))
            in_lists[b].append((a, w))
        self._out = []
        self._in = []
        for lst, dest in ((out_lists, self._out), (in_lists, self._in)):
            for items in lst:
                items.sort()
                tgt = np.array([t for t, _ in items], dtype=np.int64)
                wts = np.array([w for _, w in items], dtype=float)
                dest.append((tgt, wts, np.cumsum(wts)))
        self.out_sums = np.array([c[-1] if len(c) else 0.0
                                  for _, _, c in self._out])
        self.in_sums = np.array([c[-1] if len(c) else 0.0
                                 for _, _, c in self._in])
        self._pow_cache: dict[int, np.ndarray] = {}
        self._dense: np.ndarray | None = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_edges(cls, edges, undirected: bool = False) -> "Network":
        """Build from (u, v[, w]) tuples with arbitrary hashable node labels.

        Labels are interned to indices in first-seen order; missing weights
        default to 1.0; duplicate pairs accumulate.
        """
        index: dict = {}
        labels: list[str] = []
        weights: dict[tuple[int, int], float] = {}

        def intern(label):
            if label not in index:
                index[label] = len(labels)
                labels.append(str(label))
            return index[label]

        for edge in edges:
            u, v = intern(edge[0]), intern(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            weights[(u, v)] = weights.get((u, v), 0.0) + w
            if undirected and u != v:
                weights[(v, u)] = weights.get((v, u), 0.0) + w
        if not labels:
            raise EdgeListError("no edges found")
        return cls(len(labels), weights, labels)

    @classmethod
    def from_edge_list_file(cls, path, undirected: bool = False) -> "Network":
        """Parse 'u v [w]' lines; '#' starts a comment; labels are strings."""
        edges = []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) not in (2, 3):
                    raise EdgeListError(
                        f"{path}: line {lineno}: expected 'u v [w]', got {line!r}")
                if len(parts) == 3:
                    try:
                        w = float(parts[2])
                    except ValueError:
                        raise EdgeListError(
                            f"{path}: line {lineno}: bad weight {parts[2]!r}")
                    if not np.isfinite(w) or w < 0:
                        raise EdgeListError(
                            f"{path}: line {lineno}: weight must be nonnegative")
                    edges.append((parts[0], parts[1], w))
                else:
                    edges.append((parts[0], parts[1]))
        if not edges:
            raise EdgeListError(f"{path}: no edges found")
        return cls.from_edges(edges, undirected=undirected)

    @classmethod
    def from_dense(cls, M, labels=None) -> "Network":
        M = np.asarray(M, dtype=float)
        weights = {(int(a), int(b)): float(M[a, b])
                   for a, b in zip(*np.nonzero(M))}
        return cls(M.shape[0], weights, labels)

    @classmethod
    def from_undirected_pairs(cls, n: int, pairs, labels=None) -> "Network":
        weights = {}
        for u, v in pairs:
            weights[(int(u), int(v))] = 1.0
            weights[(int(v), int(u))] = 1.0
        return cls(n, weights, labels)

    # -- queries ------------------------------------------------------------

    def weight(self, a: int, b: int) -> float:
        if self._dense is not None:
            return float(self._dense[a, b])
        return self._weights.get((a, b), 0.0)

    def dense(self) -> np.ndarray:
        if self._dense is None:
            if self.n > _DENSE_LIMIT:
                raise ValueError("network too large for a dense matrix")
            M = np.zeros((self.n, self.n))
            for (a, b), w in self._weights.items():
                M[a, b] = w
            self._dense = M
        return self._dense

    def out_neighbors(self, v: int) -> np.ndarray:
        return self._out[v][0]

    def in_neighbors(self, v: int) -> np.ndarray:
        return self._in[v][0]

    @property
    def num_directed_edges(self) -> int:
        return len(self._weights)

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Sorted (u, v) pairs with u < v; requires a symmetric weight map."""
        if not self.is_bidirectional:
            raise ValueError("undirected edge list needs a bidirectional network")
        return sorted({(min(a, b), max(a, b))
                       for (a, b) in self._weights if a != b})

    def has_edge(self, a: int, b: int) -> bool:
        return (a, b) in self._weights

    @cached_property
    def is_simple(self) -> bool:
        for (a, b), w in self._weights.items():
            if a == b or w != 1.0 or self._weights.get((b, a)) != 1.0:
                return False
        return True

    @cached_property
    def is_bidirectional(self) -> bool:
        return all((b, a) in self._weights for (a, b) in self._weights)

    def power_row_sums(self, k: int) -> np.ndarray:
        """Ladder of row sums of A^j for j = 0..k-1, via repeated mat-vecs.

        Row j holds (A^j 1)(v) per node; row k-1 is the path-weight mass of
        length-(k-1) extensions used by the exact Pivot chain.
        """
        if k < 1:
            raise ValueError("need k >= 1")
        if k not in self._pow_cache:
            ladder = np.empty((k, self.n))
            ladder[0] = 1.0
            for j in range(1, k):
                prev = ladder[j - 1]
                cur = np.zeros(self.n)
                for v in range(self.n):
                    tgt, wts, _ = self._out[v]
                    if len(tgt):
                        cur[v] = float(wts @ prev[tgt])
                ladder[j] = cur
            self._pow_cache[k] = ladder
        return self._pow_cache[k]


# ---------------------------------------------------------------------------
# Motifs and homomorphisms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Motif:
    """Template network ([k], A_F) with a nonnegative k x k weight matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise ValueError("motif matrix must be square and nonempty")
        if not np.isfinite(M).all() or M.min() < 0:
            raise ValueError("motif weights must be finite and nonnegative")
        object.__setattr__(self, "matrix", M)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def chain(cls, k: int) -> "Motif":
        """Directed path on [k]: edges (1,2), ..., (k-1,k)."""
        M = np.zeros((k, k))
        for i in range(k - 1):
            M[i, i + 1] = 1.0
        return cls(M)

    @cached_property
    def is_chain(self) -> bool:
        expected = Motif.chain(self.k).matrix
        return bool(np.array_equal(self.matrix, expected))

    @cached_property
    def edges(self) -> tuple[tuple[int, int, float], ...]:
        """Nonzero (i, j, exponent) entries of the motif matrix."""
        out = []
        for i in range(self.k):
            for j in range(self.k):
                if self.matrix[i, j] > 0:
                    out.append((i, j, float(self.matrix[i, j])))
        return tuple(out)


def hom_weight(net: Network, motif: Motif, x) -> float:
    """Product of target weights over motif edges; positive iff x is a homomorphism."""
    total = 1.0
    for i, j, e in motif.edges:
        a = net.weight(x[i], x[j])
        if a <= 0.0:
            return 0.0
        total *= a if e == 1.0 else a ** e
    return total


def _sample_cdf(rng, cum: np.ndarray) -> int:
    u = rng.random() * cum[-1]
    return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)


def rejection_sample_hom(net: Network, motif: Motif, rng,
                         max_tries: int = 200000):
    """Propose i.i.d. uniform vertex maps until one has positive motif weight."""
    for _ in range(max_tries):
        x = tuple(int(v) for v in rng.integers(0, net.n, size=motif.k))
        if hom_weight(net, motif, x) > 0:
            return x
    raise SamplingError("no homomorphism found by rejection sampling")


def chain_walk_sample(net: Network, motif: Motif, rng,
                      max_tries: int = 10000):
    """Greedy chain-motif homomorphism by walking successive out-edges.

    Far cheaper than rejection sampling on sparse networks with long chains;
    the draw is not from the motif weight distribution, which is irrelevant
    for initializing an ergodic chain.
    """
    if not motif.is_chain:
        raise ValueError("walk construction requires a chain motif")
    for _ in range(max_tries):
        x = [int(rng.integers(net.n))]
        ok = True
        for _ in range(motif.k - 1):
            tgt, _, cum = net._out[x[-1]]
            if not len(tgt):
                ok = False
                break
            x.append(int(tgt[_sample_cdf(rng, cum)]))
        if ok:
            return tuple(x)
    raise SamplingError("no homomorphism found by chain walking")


def initial_homomorphism(net: Network, motif: Motif, rng,
                         max_tries: int = 20000):
    """Rejection sampling with a chain-walk fallback for chain motifs.

    Rejection acceptance decays like hom(F,G)/n^k, which is hopeless for long
    chains on large sparse networks; the fallback trades the proposal law
    (irrelevant for initializing an ergodic chain) for a guaranteed start.
    """
    try:
        return rejection_sample_hom(net, motif, rng, max_tries=max_tries)
    except SamplingError:
        if motif.is_chain and motif.k >= 2:
            return chain_walk_sample(net, motif, rng)
        raise


def glauber_conditional(net: Network, motif: Motif, x, v: int):
    """Candidate nodes and probabilities for resampling motif node v.

    p(w) is proportional to the product of A(x(u), w)^{A_F(u,v)} over incoming
    motif edges and A(w, x(u))^{A_F(v,u)} over outgoing ones; with no incident
    motif edges the law is uniform over all nodes.
    """
    out_terms = []   # require A(x(u), w) > 0: w in out-neighbors of x(u)
    in_terms = []    # require A(w, x(u)) > 0: w in in-neighbors of x(u)
    self_exp = 0.0
    for i, j, e in motif.edges:
        if i == v and j == v:
            self_exp += e
        elif j == v:
            out_terms.append((x[i], e))
        elif i == v:
            in_terms.append((x[j], e))
    if not out_terms and not in_terms and self_exp == 0.0:
        return np.arange(net.n), np.full(net.n, 1.0 / net.n)
    # candidates: smallest incident neighbor list
    pools = [net.out_neighbors(u) for u, _ in out_terms]
    pools += [net.in_neighbors(u) for u, _ in in_terms]
    if self_exp > 0.0:
        pools.append(np.array([v_ for v_ in range(net.n)
                               if net.weight(v_, v_) > 0], dtype=np.int64))
    cand = min(pools, key=len)
    weights = np.ones(len(cand))
    for idx, w_node in enumerate(cand):
        p = 1.0
        for u, e in out_terms:
            a = net.weight(u, int(w_node))
            if a <= 0.0:
                p = 0.0
                break
            p *= a if e == 1.0 else a ** e
        if p > 0.0:
            for u, e in in_terms:
                a = net.weight(int(w_node), u)
                if a <= 0.0:
                    p = 0.0
                    break
                p *= a if e == 1.0 else a ** e
        if p > 0.0 and self_exp > 0.0:
            a = net.weight(int(w_node), int(w_node))
            p = 0.0 if a <= 0.0 else p * a ** self_exp
        weights[idx] = p
    total = float(weights.sum())
    if total <= 0.0:
        raise AssertionError("empty Glauber conditional for a valid homomorphism")
    return cand, weights / total


def glauber_update(net: Network, motif: Motif, x, rng):
    """Resample one uniformly chosen motif node from its exact conditional."""
    v = int(rng.integers(motif.k))
    cand, probs = glauber_conditional(net, motif, x, v)
    pick = int(cand[_sample_cdf(rng, np.cumsum(probs))])
    new = list(x)
    new[v] = pick
    return tuple(new)


def pivot_acceptance(net: Network, motif: Motif, v: int, ell: int,
                     mode: str = "exact") -> float:
    """Acceptance probability for the pivot move v -> ell, clamped to [0, 1]."""
    if mode == "approximate":
        if net.out_sums[v] <= 0:
            return 0.0
        return min(1.0, float(net.in_sums[v] / net.out_sums[v]))
    if mode != "exact":
        raise ValueError(f"unknown pivot mode {mode!r}")
    ladder = net.power_row_sums(motif.k)
    rp = ladder[motif.k - 1]
    num = rp[ell] * net.weight(ell, v) * net.out_sums[v]
    den = rp[v] * net.weight(v, ell) * net.out_sums[ell]
    if den <= 0.0:
        return 0.0
    return min(1.0, float(num / den))


def pivot_update(net: Network, motif: Motif, x, rng, mode: str = "exact"):
    """One Pivot chain step for a k-chain motif.

    Moves the pivot x(1) by one weighted random-walk step, accepts it with the
    Metropolis-Hastings probability, then resamples x(2..k) successively.  On
    rejection (or a dead-end pivot or tail extension) the input homomorphism
    is returned unchanged.
    """
    if not motif.is_chain:
        raise ValueError("pivot chain requires a chain motif")
    k = motif.k
    v = x[0]
    if net.out_sums[v] <= 0.0:
        return x
    tgt, wts, cum = net._out[v]
    ell = int(tgt[_sample_cdf(rng, cum)])
    lam_acc = pivot_acceptance(net, motif, v, ell, mode=mode)
    if rng.random() > lam_acc:
        return x
    ladder = net.power_row_sums(k) if mode == "exact" else None
    new = [ell]
    for i in range(1, k):
        tgt, wts, cum = net._out[new[-1]]
        if not len(tgt):
            return x
        if mode == "exact":
            ext = wts * ladder[k - 1 - i][tgt]
            total = float(ext.sum())
            if total <= 0.0:
                return x
            new.append(int(tgt[_sample_cdf(rng, np.cumsum(ext))]))
        else:
            new.append(int(tgt[_sample_cdf(rng, cum)]))
    return tuple(new)


def chain_update(net: Network, motif: Motif, x, rng, mode: str):
    """Dispatch one MCMC update by mode name."""
    if mode == "glauber":
        return glauber_update(net, motif, x, rng)
    if mode == "pivot":
        return pivot_update(net, motif, x, rng, mode="exact")
    if mode == "pivot-approx":
        return pivot_update(net, motif, x, rng, mode="approximate")
    raise ValueError(f"unknown MCMC mode {mode!r}")


def hom_distribution_bruteforce(net: Network, motif: Motif) -> dict:
    """Exact motif weight distribution over V^[k] by full enumeration.

    Guarded at n^k <= 10^7 states; uniform over Hom(F, G) when both weight
    matrices are binary.
    """
    if net.n ** motif.k > _ORACLE_GUARD:
        raise OracleSizeError(
            f"{net.n}^{motif.k} states exceed the enumeration guard")
    table = {}
    for x in itertools.product(range(net.n), repeat=motif.k):
        w = hom_weight(net, motif, x)
        if w > 0:
            table[x] = w
    if not table:
        raise SamplingError("no homomorphism exists")
    total = sum(table.values())
    return {x: w / total for x, w in table.items()}


def mesoscale_patch(net: Network, x) -> np.ndarray:
    """k x k matrix of target weights between the images of the motif nodes."""
    idx = np.asarray(x, dtype=np.int64)
    if net.n <= _DENSE_LIMIT:
        return net.dense()[np.ix_(idx, idx)].copy()
    k = len(x)
    out = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            out[a, b] = net.weight(int(idx[a]), int(idx[b]))
    return out


def tv_distance(p, q) -> float:
    """Total variation distance: half the L1 distance between distributions."""
    if isinstance(p, dict) or isinstance(q, dict):
        keys = set(p) | set(q)
        ps = sum(p.values())
        qs = sum(q.values())
        if abs(ps - 1.0) > 1e-9 or abs(qs - 1.0) > 1e-9:
            raise ValueError("distributions must sum to one")
        return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support index set")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("distributions must sum to one")
    return 0.5 * float(np.abs(p - q).sum())
